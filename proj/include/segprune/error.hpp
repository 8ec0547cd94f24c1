// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segprune {

enum class ErrorCode {
    InvalidDepth,
    InvalidCamera,
    BehindCamera,
    InconsistentViews,
    MalformedAttention,
    BudgetOverflow,
    EmptyPool,
    EmptyScene,
    EmptySelection,
    InvariantViolation,
    MalformedBundle,
    UnsupportedVersion,
    InvalidConfig,
    GuardExceeded,
    Io,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidDepth: return "invalid-depth";
    case ErrorCode::InvalidCamera: return "invalid-camera";
    case ErrorCode::BehindCamera: return "behind-camera";
    case ErrorCode::InconsistentViews: return "inconsistent-views";
    case ErrorCode::MalformedAttention: return "malformed-attention";
    case ErrorCode::BudgetOverflow: return "budget-overflow";
    case ErrorCode::EmptyPool: return "empty-pool";
    case ErrorCode::EmptyScene: return "empty-scene";
    case ErrorCode::EmptySelection: return "empty-selection";
    case ErrorCode::InvariantViolation: return "invariant-violation";
    case ErrorCode::MalformedBundle: return "malformed-bundle";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::InvalidConfig: return "config-error";
    case ErrorCode::GuardExceeded: return "guard-exceeded";
    case ErrorCode::Io: return "io-error";
    }
    return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

/// Process exit status for the CLI: 2 malformed input, 3 config error, 1 other.
inline int exit_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidDepth:
    case ErrorCode::InvalidCamera:
    case ErrorCode::InconsistentViews:
    case ErrorCode::MalformedAttention:
    case ErrorCode::MalformedBundle:
    case ErrorCode::UnsupportedVersion:
    case ErrorCode::EmptyScene:
        return 2;
    case ErrorCode::BudgetOverflow:
    case ErrorCode::InvalidConfig:
    case ErrorCode::GuardExceeded:
        return 3;
    default:
        return 1;
    }
}

}  // namespace segprune
