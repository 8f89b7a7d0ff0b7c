// Copyright 2026 The s2st Authors. All Rights Reserved.
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

namespace s2st {

enum class Errc {
  kShapeMismatch,
  kEmptyOutput,
  kIndexOutOfVocab,
  kNotScalar,
  kUnsupportedFormat,
  kCorruptFile,
  kTooShort,
  kTooFewPoints,
  kDimMismatch,
  kEmptyInput,
  kMissingDurations,
  kNoMaskedPositions,
  kPrefixTooLong,
  kEmptyTarget,
  kUtteranceTooLong,
  kFeatureSpaceMismatch,
  kCodebookMismatch,
  kLengthMismatch,
  kEmptyCorpus,
  kEmptyRef,
  kTranscriberFailure,
  kMalformedManifest,
  kProviderUnavailable,
  kProviderFailure,
  kDuplicateId,
  kNonFiniteLoss,
  kConfig,
  kIo,
};

std::string_view errc_name(Errc code);

// All library failures surface as s2st::Error; the code identifies the
// contract that fired, the message carries the detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace s2st
