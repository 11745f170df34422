/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <stdexcept>
#include <string>

namespace attnet {

  /// Error carrying a stable machine-readable code (e.g. "empty-validator-set")
  /// next to the human-readable message.
  class Error : public std::runtime_error {
   public:
    Error(std::string code, const std::string &detail)
        : std::runtime_error(detail.empty() ? code : code + ": " + detail),
          code_(std::move(code)) {}

    const std::string &code() const noexcept {
      return code_;
    }

   private:
    std::string code_;
  };

}  // namespace attnet
