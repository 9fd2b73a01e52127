// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posebridge {

enum class ErrorCode {
  // skeleton-core
  SchemeMismatch,
  NonFinite,
  BadConfidence,
  LowConfidence,
  UnknownLandmark,
  InvalidScheme,
  InvalidRig,
  InvalidConstraint,
  // retarget
  DegenerateBasis,
  EmptyResult,
  InvalidRetargetMap,
  // ik
  MissingJoint,
  DegenerateDirection,
  InvalidChain,
  // stereo
  ParseError,
  DegenerateGeometry,
  NonOrthonormalRotation,
  DegenerateRays,
  SyncWindowExceeded,
  // wire / transport
  BadMagic,
  UnsupportedVersion,
  TruncatedFrame,
  CountMismatch,
  BadFrameType,
  FrameTooLarge,
  Disconnected,
  BindError,
  IoError,
  // pipeline / config
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SchemeMismatch: return "SchemeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadConfidence: return "BadConfidence";
    case ErrorCode::LowConfidence: return "LowConfidence";
    case ErrorCode::UnknownLandmark: return "UnknownLandmark";
    case ErrorCode::InvalidScheme: return "InvalidScheme";
    case ErrorCode::InvalidRig: return "InvalidRig";
    case ErrorCode::InvalidConstraint: return "InvalidConstraint";
    case ErrorCode::DegenerateBasis: return "DegenerateBasis";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::InvalidRetargetMap: return "InvalidRetargetMap";
    case ErrorCode::MissingJoint: return "MissingJoint";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::InvalidChain: return "InvalidChain";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NonOrthonormalRotation: return "NonOrthonormalRotation";
    case ErrorCode::DegenerateRays: return "DegenerateRays";
    case ErrorCode::SyncWindowExceeded: return "SyncWindowExceeded";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::BadFrameType: return "BadFrameType";
    case ErrorCode::FrameTooLarge: return "FrameTooLarge";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::BindError: return "BindError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// a typed code. Callers branch on code(), never on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace posebridge
