#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rafg {

// Error codes cover every failure mode the library reports. CLI maps these
// onto exit codes (setup problems -> 2, runtime/transport problems -> 3).
enum class Errc {
  // tabular
  MissingFile,
  UnknownTarget,
  DuplicateHeader,
  EmptyTable,
  SingleClassTarget,
  MalformedCsv,
  NameCollision,
  InvalidName,
  LengthMismatch,
  BadFoldCount,
  EmptyTrainingSet,
  // fexpr
  SyntaxError,
  DepthExceeded,
  UnknownFunction,
  UnknownColumn,
  TypeError,
  NoColumnReference,
  NonFiniteResult,
  // knowledge
  DimensionMismatch,
  ZeroVector,
  EmptyText,
  EmptyCorpus,
  DuplicateId,
  UnreadableFile,
  BadIndexFile,
  // oracle
  TransportFailure,
  EmptyResponse,
  MalformedProposal,
  ReplayExhausted,
  // configuration / io
  InvalidConfig,
  IoError,
};

class Error : public std::runtime_error {
 public:
  static constexpr std::size_t npos = ~std::size_t{0};

  Error(Errc code, const std::string& message, std::size_t position = npos)
      : std::runtime_error(message), code_(code), position_(position) {}

  Errc code() const noexcept { return code_; }

  // Byte offset (parse errors) or row index (evaluation errors); npos if n/a.
  std::size_t position() const noexcept { return position_; }

 private:
  Errc code_;
  std::size_t position_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message,
                              std::size_t position = Error::npos) {
  throw Error(code, message, position);
}

}  // namespace rafg
