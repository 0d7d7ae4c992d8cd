#pragma once

#include <stdexcept>
#include <string>

namespace pdspeech {

// Every failure the library reports, grouped so the CLI can map them to
// exit codes: input/IO problems, configuration problems, runtime problems.
enum class Err {
  // input / IO
  MissingFile,
  MalformedRiff,
  UnsupportedEncoding,
  EmptyAudio,
  InvalidTimestamps,
  CorruptFile,
  VersionMismatch,
  MalformedInput,
  // configuration
  InvalidConfig,
  ChunkTooShort,
  EvenK,
  HashMismatch,
  // runtime / data
  NoSpeechDetected,
  EmptyTimestamps,
  TimestampOutOfRange,
  EmptyChunk,
  ShapeMismatch,
  TapeCorrupted,
  SeedShapeMismatch,
  EmptyBatch,
  EmptyTrainingSet,
  EmptyTestSet,
  DivergenceDetected,
  TooFewSubjects,
  LengthMismatch,
  InvalidClass,
  EmptyInput,
  MixedClasses,
  EmptyRecording,
};

const char* err_name(Err e);

class PdError : public std::runtime_error {
 public:
  PdError(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& what) {
  throw PdError(code, what);
}

// Exit-code category used by the CLI: 2 input/IO, 3 config, 4 runtime.
int exit_code_for(Err e);

}  // namespace pdspeech
