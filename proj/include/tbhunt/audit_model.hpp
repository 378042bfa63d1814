#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tbhunt {

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition (e.g. unsorted input).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// ----------------------------------------------------------------------------
// Identifiers
// ----------------------------------------------------------------------------

enum class EntityUid : std::uint32_t {};
enum class EventId : std::uint64_t {};

constexpr std::uint32_t to_underlying(EntityUid u) { return static_cast<std::uint32_t>(u); }
constexpr std::uint64_t to_underlying(EventId e) { return static_cast<std::uint64_t>(e); }

/// Microseconds since the Unix epoch.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

// ----------------------------------------------------------------------------
// Entities
// ----------------------------------------------------------------------------

enum class EntityKind : std::uint8_t { File, Process, NetworkConnection };

std::string_view to_string(EntityKind kind);

struct FileAttributes {
    std::string name;  // basename
    std::string path;  // absolute
    std::string user;
    std::string group;
    bool operator==(const FileAttributes&) const = default;
};

struct ProcessAttributes {
    std::int64_t pid = -1;
    std::string exename;
    std::string user;
    std::string group;
    std::string cmd;
    bool operator==(const ProcessAttributes&) const = default;
};

struct NetworkAttributes {
    std::string srcip;
    std::int64_t srcport = -1;
    std::string dstip;
    std::int64_t dstport = -1;
    std::string protocol;
    bool operator==(const NetworkAttributes&) const = default;
};

/// Attribute value as seen by predicates: integers or strings.
using Value = std::variant<std::int64_t, std::string>;

std::string value_to_string(const Value& v);

struct SystemEntity {
    EntityUid uid{};
    std::variant<FileAttributes, ProcessAttributes, NetworkAttributes> attributes;

    EntityKind kind() const { return static_cast<EntityKind>(attributes.index()); }

    const FileAttributes* file() const { return std::get_if<FileAttributes>(&attributes); }
    const ProcessAttributes* process() const { return std::get_if<ProcessAttributes>(&attributes); }
    const NetworkAttributes* network() const { return std::get_if<NetworkAttributes>(&attributes); }

    /// Value of a named attribute, or nullopt when the kind does not carry it.
    std::optional<Value> attribute(std::string_view name) const;

    bool operator==(const SystemEntity&) const = default;
};

SystemEntity make_file(std::string path, std::string user = {}, std::string group = {});
SystemEntity make_process(std::string exename, std::int64_t pid, std::string user = {},
                          std::string group = {}, std::string cmd = {});
SystemEntity make_network(std::string srcip, std::int64_t srcport, std::string dstip,
                          std::int64_t dstport, std::string protocol);

/// Attribute names a kind declares, in declaration order.
const std::vector<std::string_view>& attribute_names(EntityKind kind);
bool has_attribute(EntityKind kind, std::string_view name);
bool is_numeric_attribute(std::string_view name);

/// Attribute used when a query gives a bare value: name / exename / dstip.
std::string_view default_attribute(EntityKind kind);

/// "proc:<exename>:<pid>", "file:<path>", "net:<srcip>:<srcport>:<dstip>:<dstport>:<proto>".
/// Throws ValidationError naming the first missing required attribute.
std::string canonical_identifier(const SystemEntity& entity);

std::string basename_of(std::string_view path);

// ----------------------------------------------------------------------------
// Events
// ----------------------------------------------------------------------------

enum class OperationType : std::uint8_t { Read, Write, Execute, Start, End, Rename };

inline constexpr OperationType kAllOperations[] = {OperationType::Read,  OperationType::Write,
                                                   OperationType::Execute, OperationType::Start,
                                                   OperationType::End,   OperationType::Rename};

std::string_view to_string(OperationType op);
std::optional<OperationType> parse_operation(std::string_view text);

enum class EventCategory : std::uint8_t { ProcessToFile, ProcessToProcess, ProcessToNetwork };

std::string_view to_string(EventCategory c);
EventCategory category_for(EntityKind objectKind);

struct SystemEvent {
    EventId id{};
    EntityUid subject{};
    EntityUid object{};
    EventCategory category = EventCategory::ProcessToFile;
    OperationType operation = OperationType::Read;
    Micros startTime = 0;
    Micros endTime = 0;
    std::int64_t dataAmount = 0;
    std::int64_t failureCode = 0;

    bool operator==(const SystemEvent&) const = default;
};

/// Event attributes addressable from queries (`evt.amount > 10`).
const std::vector<std::string_view>& event_attribute_names();
bool is_event_attribute(std::string_view name);
std::optional<Value> event_attribute(const SystemEvent& e, std::string_view name);

struct SyscallClass {
    EventCategory category;
    OperationType operation;
    bool operator==(const SyscallClass&) const = default;
};

/// Maps a monitored syscall on an object of the given kind to its event
/// category and operation. nullopt means the pair is not monitored.
std::optional<SyscallClass> classify_syscall(std::string_view syscall, EntityKind objectKind);

}  // namespace tbhunt
