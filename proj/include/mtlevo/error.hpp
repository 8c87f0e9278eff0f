// Copyright 2026 The mtlevo Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtlevo {

enum class ErrorKind {
  kDimension,
  kConfig,
  kData,
  kState,
  kNumeric,
  kAssembly,
  kParse,
  kHarness,
};

std::string_view to_string(ErrorKind kind);

/// Base of every error raised by the library. The kind tells callers which
/// contract was violated without having to catch each subclass.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define MTLEVO_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

MTLEVO_DEFINE_ERROR(DimensionError, kDimension)
MTLEVO_DEFINE_ERROR(ConfigError, kConfig)
MTLEVO_DEFINE_ERROR(DataError, kData)
MTLEVO_DEFINE_ERROR(StateError, kState)
MTLEVO_DEFINE_ERROR(NumericError, kNumeric)
MTLEVO_DEFINE_ERROR(AssemblyError, kAssembly)
MTLEVO_DEFINE_ERROR(ParseError, kParse)
MTLEVO_DEFINE_ERROR(HarnessError, kHarness)

#undef MTLEVO_DEFINE_ERROR

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension-error";
    case ErrorKind::kConfig: return "config-error";
    case ErrorKind::kData: return "data-error";
    case ErrorKind::kState: return "state-error";
    case ErrorKind::kNumeric: return "numeric-error";
    case ErrorKind::kAssembly: return "assembly-error";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kHarness: return "harness-error";
  }
  return "error";
}

}  // namespace mtlevo
