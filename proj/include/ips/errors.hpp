// SPDX-License-Identifier: Apache-2.0
//
// ips: outdoor-to-indoor positioning simulation and estimation toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ---------------------------------------------------------------------------

#pragma once

#include <stdexcept>
#include <string>

namespace ips {

/// @brief Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// @brief Invalid or inconsistent geometric input (panels, windows, anchor placement).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// @brief Malformed configuration or file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// @brief Value outside the supported domain (for example a carrier above 48 GHz).
class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// @brief Index outside a valid range (for example a floor index).
class IndexError : public Error {
 public:
  using Error::Error;
};

/// @brief Geometry degenerate enough that a result is undefined.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// @brief No channel tap rises above the detection threshold.
class NoDetectablePath : public Error {
 public:
  using Error::Error;
};

/// @brief Not enough labeled data to calibrate a decision rule.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// @brief Linear system rank-deficient (for example coplanar anchors).
class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// @brief Fewer anchors than the estimator requires.
class TooFewAnchors : public Error {
 public:
  using Error::Error;
};

/// @brief Fewer measurements than the estimator requires.
class TooFewMeasurements : public Error {
 public:
  using Error::Error;
};

/// @brief A measurement references a panel id absent from the scene.
class UnknownPanel : public Error {
 public:
  using Error::Error;
};

/// @brief Unknowns exceed the information carried by the measurement set.
class Underdetermined : public Error {
 public:
  using Error::Error;
};

/// @brief Fisher information matrix numerically singular.
class SingularFim : public Error {
 public:
  using Error::Error;
};

/// @brief Failure writing or reading a file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ips
