#include "pdspeech/errors.hpp"

namespace pdspeech {

const char* err_name(Err e) {
  switch (e) {
    case Err::MissingFile: return "MissingFile";
    case Err::MalformedRiff: return "MalformedRiff";
    case Err::UnsupportedEncoding: return "UnsupportedEncoding";
    case Err::EmptyAudio: return "EmptyAudio";
    case Err::InvalidTimestamps: return "InvalidTimestamps";
    case Err::CorruptFile: return "CorruptFile";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::MalformedInput: return "MalformedInput";
    case Err::InvalidConfig: return "InvalidConfig";
    case Err::ChunkTooShort: return "ChunkTooShort";
    case Err::EvenK: return "EvenK";
    case Err::HashMismatch: return "HashMismatch";
    case Err::NoSpeechDetected: return "NoSpeechDetected";
    case Err::EmptyTimestamps: return "EmptyTimestamps";
    case Err::TimestampOutOfRange: return "TimestampOutOfRange";
    case Err::EmptyChunk: return "EmptyChunk";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::TapeCorrupted: return "TapeCorrupted";
    case Err::SeedShapeMismatch: return "SeedShapeMismatch";
    case Err::EmptyBatch: return "EmptyBatch";
    case Err::EmptyTrainingSet: return "EmptyTrainingSet";
    case Err::EmptyTestSet: return "EmptyTestSet";
    case Err::DivergenceDetected: return "DivergenceDetected";
    case Err::TooFewSubjects: return "TooFewSubjects";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::InvalidClass: return "InvalidClass";
    case Err::EmptyInput: return "EmptyInput";
    case Err::MixedClasses: return "MixedClasses";
    case Err::EmptyRecording: return "EmptyRecording";
  }
  return "Unknown";
}

int exit_code_for(Err e) {
  switch (e) {
    case Err::MissingFile:
    case Err::MalformedRiff:
    case Err::UnsupportedEncoding:
    case Err::EmptyAudio:
    case Err::InvalidTimestamps:
    case Err::CorruptFile:
    case Err::VersionMismatch:
    case Err::MalformedInput:
      return 2;
    case Err::InvalidConfig:
    case Err::ChunkTooShort:
    case Err::EvenK:
    case Err::HashMismatch:
      return 3;
    default:
      return 4;
  }
}

}  // namespace pdspeech
