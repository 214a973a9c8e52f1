#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace pktimg {

// Malformed input file (pcap, dataset, checkpoint, PGM). Carries the byte
// offset where decoding failed when one is known.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what,
                       std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(offset ? what + " (at byte offset " +
                                        std::to_string(*offset) + ")"
                                  : what),
        offset_(offset) {}

  std::optional<std::size_t> offset() const noexcept { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

// A pcap record header or body ends before the file does.
class TruncationError : public FormatError {
 public:
  TruncationError(const std::string& what, std::size_t packet_index,
                  std::size_t offset)
      : FormatError(what + " in packet " + std::to_string(packet_index),
                    offset),
        packet_index_(packet_index) {}

  std::size_t packet_index() const noexcept { return packet_index_; }

 private:
  std::size_t packet_index_;
};

// Caller violated a precondition: shape mismatch, label out of range, ...
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad user-supplied configuration: unknown feature, malformed CSV, ...
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A workflow stage produced nothing to work with.
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pktimg
