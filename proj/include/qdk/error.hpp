// Copyright 2026 The QDK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QDK_ERROR_HPP_
#define QDK_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qdk {

// Base of every error thrown by the library. `kind()` is a stable,
// machine-parsable class name that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define QDK_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

QDK_DEFINE_ERROR(DimensionError, "dimension_error")
QDK_DEFINE_ERROR(ShapeError, "shape_error")
QDK_DEFINE_ERROR(NumericError, "numeric_error")
QDK_DEFINE_ERROR(ConfigError, "config_error")
QDK_DEFINE_ERROR(StructureError, "structure_error")
QDK_DEFINE_ERROR(ConversionError, "conversion_error")
QDK_DEFINE_ERROR(IntegrityError, "integrity_error")
QDK_DEFINE_ERROR(InvariantError, "invariant_error")
QDK_DEFINE_ERROR(ContractError, "contract_error")
QDK_DEFINE_ERROR(IoError, "io_error")

#undef QDK_DEFINE_ERROR

// Raised by the model and dataset loaders; carries the byte offset at which
// decoding failed.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : Error("parse_error",
              message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace qdk

#endif  // QDK_ERROR_HPP_
