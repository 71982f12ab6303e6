#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace qto {

/// Dense index into the entity vocabulary.
struct EntityId {
  std::uint32_t value = 0;

  constexpr EntityId() = default;
  constexpr explicit EntityId(std::uint32_t v) : value(v) {}

  constexpr std::size_t index() const { return value; }
  friend constexpr auto operator<=>(EntityId, EntityId) = default;
};

/// Dense index into the relation vocabulary after inverse augmentation.
/// Forward relations have even ids, their inverses the following odd id.
struct RelationId {
  std::uint32_t value = 0;

  constexpr RelationId() = default;
  constexpr explicit RelationId(std::uint32_t v) : value(v) {}

  constexpr std::size_t index() const { return value; }
  constexpr RelationId inverse() const { return RelationId(value ^ 1u); }
  constexpr bool is_inverse() const { return (value & 1u) != 0; }
  friend constexpr auto operator<=>(RelationId, RelationId) = default;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  friend constexpr auto operator<=>(const Triple&, const Triple&) = default;
};

/// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kParse = 4,
  kUnsupportedQuery = 5,
  kBudgetExceeded = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

/// Cumulative graphs used for scoring, traversal and answer splits.
enum class GraphSelector { kTrain = 0, kTrainValid = 1, kFull = 2 };

const char* to_string(GraphSelector g);
GraphSelector parse_graph_selector(const std::string& s);

}  // namespace qto

template <>
struct std::hash<qto::EntityId> {
  std::size_t operator()(qto::EntityId e) const noexcept { return std::hash<std::uint32_t>{}(e.value); }
};
