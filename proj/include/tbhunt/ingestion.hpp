#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/audit_model.hpp"

namespace tbhunt {

class IoError : public Error {
public:
    using Error::Error;
};

/// One decoded NDJSON audit line, before entity resolution.
struct RawAuditRecord {
    Micros tsStart = 0;
    Micros tsEnd = 0;
    std::string syscall;
    SystemEntity subject;  // always a process
    SystemEntity object;
    std::int64_t dataAmount = 0;
    std::int64_t failureCode = 0;
};

/// Decodes a single NDJSON line. Throws ValidationError describing the
/// first problem found.
RawAuditRecord decode_record(std::string_view line);

struct IngestDiagnostic {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct ParsedLog {
    std::vector<SystemEntity> entities;  // uid == index
    std::vector<SystemEvent> events;     // non-decreasing startTime
    std::size_t skipped = 0;
    std::vector<IngestDiagnostic> diagnostics;
};

/// Parses an NDJSON audit stream. Malformed lines and unmonitored syscalls
/// are skipped and counted; entities are deduplicated by canonical id.
ParsedLog parse_records(std::istream& in);
ParsedLog parse_records(const std::filesystem::path& file);

struct ReductionConfig {
    Micros mergeThresholdMicros = kMicrosPerSecond;
};

/// Merges consecutive events of the same (subject, object, operation) whose
/// gap `next.startTime - current.endTime` lies in [0, threshold]. Merging
/// chains greedily left to right; the merged event keeps the first event's
/// id, start time and failure code, takes the last event's end time and sums
/// data amounts. Input must be sorted by startTime.
std::vector<SystemEvent> reduce_events(std::span<const SystemEvent> events, const ReductionConfig& cfg = {});

/// Parses "1s", "500ms", "250us", "2min", "1h" or a bare integer (µs).
Micros parse_duration(std::string_view text);

}  // namespace tbhunt
