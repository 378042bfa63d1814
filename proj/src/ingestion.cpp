#include "tbhunt/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

namespace tbhunt {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) throw ValidationError(where + " is missing '" + key + "'");
    return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& where, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) throw ValidationError(where + " is missing '" + key + "'");
        return {};
    }
    if (!it->is_string()) throw ValidationError(where + "." + key + " must be a string");
    return it->get<std::string>();
}

std::int64_t get_int(const json& obj, const char* key, const std::string& where, bool required,
                     std::int64_t fallback = 0) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) throw ValidationError(where + " is missing '" + key + "'");
        return fallback;
    }
    if (!it->is_number_integer()) throw ValidationError(where + "." + key + " must be an integer");
    return it->get<std::int64_t>();
}

bool is_ipv4(std::string_view s) {
    int parts = 0;
    std::size_t i = 0;
    while (i <= s.size()) {
        auto dot = s.find('.', i);
        auto part = s.substr(i, dot == std::string_view::npos ? std::string_view::npos : dot - i);
        if (part.empty() || part.size() > 3) return false;
        int value = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
        if (ec != std::errc{} || ptr != part.data() + part.size() || value > 255) return false;
        ++parts;
        if (dot == std::string_view::npos) break;
        i = dot + 1;
    }
    return parts == 4;
}

SystemEntity decode_process(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + " must be an object");
    return make_process(get_string(obj, "exename", where, true), get_int(obj, "pid", where, true),
                        get_string(obj, "user", where, false), get_string(obj, "group", where, false),
                        get_string(obj, "cmd", where, false));
}

SystemEntity decode_object(const json& obj) {
    const std::string where = "object";
    if (!obj.is_object()) throw ValidationError("object must be an object");
    const auto kind = get_string(obj, "kind", where, true);
    if (kind == "file") {
        auto e = make_file(get_string(obj, "path", where, true), get_string(obj, "user", where, false),
                           get_string(obj, "group", where, false));
        auto name = get_string(obj, "name", where, false);
        if (!name.empty()) std::get<FileAttributes>(e.attributes).name = std::move(name);
        return e;
    }
    if (kind == "process") return decode_process(obj, where);
    if (kind == "network") {
        auto e = make_network(get_string(obj, "srcip", where, true), get_int(obj, "srcport", where, true),
                              get_string(obj, "dstip", where, true), get_int(obj, "dstport", where, true),
                              get_string(obj, "protocol", where, true));
        const auto& n = *e.network();
        if (!is_ipv4(n.srcip) || !is_ipv4(n.dstip))
            throw ValidationError("only dotted IPv4 addresses are supported (got " + n.srcip + " -> " + n.dstip +
                                  ")");
        if (n.srcport > 65535 || n.dstport > 65535) throw ValidationError("port out of range");
        return e;
    }
    throw ValidationError("object.kind must be file|process|network, got '" + kind + "'");
}

}  // namespace

RawAuditRecord decode_record(std::string_view line) {
    json doc = json::parse(line.begin(), line.end(), nullptr, false);
    if (doc.is_discarded()) throw ValidationError("malformed JSON");
    if (!doc.is_object()) throw ValidationError("record must be a JSON object");
    RawAuditRecord r;
    r.tsStart = get_int(doc, "ts_start", "record", true);
    r.tsEnd = get_int(doc, "ts_end", "record", true);
    if (r.tsStart > r.tsEnd) throw ValidationError("ts_start > ts_end");
    r.syscall = get_string(doc, "syscall", "record", true);
    r.subject = decode_process(require(doc, "subject", "record"), "subject");
    r.object = decode_object(require(doc, "object", "record"));
    r.dataAmount = get_int(doc, "data_amount", "record", false);
    if (r.dataAmount < 0) throw ValidationError("data_amount must be non-negative");
    r.failureCode = get_int(doc, "failure_code", "record", false);
    return r;
}

ParsedLog parse_records(std::istream& in) {
    if (!in) throw IoError("audit stream is not readable");
    ParsedLog out;
    std::unordered_map<std::string, EntityUid> byCanonical;
    auto intern = [&](SystemEntity e) {
        auto key = canonical_identifier(e);
        auto [it, inserted] = byCanonical.try_emplace(key, EntityUid{static_cast<std::uint32_t>(out.entities.size())});
        if (inserted) {
            e.uid = it->second;
            out.entities.push_back(std::move(e));
        }
        return it->second;
    };

    std::string line;
    std::size_t lineNo = 0;
    std::uint64_t nextEventId = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        RawAuditRecord rec;
        try {
            rec = decode_record(line);
            canonical_identifier(rec.subject);
            canonical_identifier(rec.object);
        } catch (const ValidationError& e) {
            ++out.skipped;
            out.diagnostics.push_back({lineNo, e.what()});
            continue;
        }
        auto cls = classify_syscall(rec.syscall, rec.object.kind());
        if (!cls) {
            ++out.skipped;
            out.diagnostics.push_back({lineNo, "syscall '" + rec.syscall + "' on " +
                                                   std::string(to_string(rec.object.kind())) + " is not monitored"});
            continue;
        }
        SystemEvent ev;
        ev.id = EventId{nextEventId++};
        ev.subject = intern(std::move(rec.subject));
        ev.object = intern(std::move(rec.object));
        ev.category = cls->category;
        ev.operation = cls->operation;
        ev.startTime = rec.tsStart;
        ev.endTime = rec.tsEnd;
        ev.dataAmount = rec.dataAmount;
        ev.failureCode = rec.failureCode;
        out.events.push_back(ev);
    }
    if (in.bad()) throw IoError("read error after line " + std::to_string(lineNo));
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const SystemEvent& a, const SystemEvent& b) { return a.startTime < b.startTime; });
    return out;
}

ParsedLog parse_records(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open audit log '" + file.string() + "'");
    return parse_records(in);
}

std::vector<SystemEvent> reduce_events(std::span<const SystemEvent> events, const ReductionConfig& cfg) {
    if (cfg.mergeThresholdMicros < 0) throw ContractViolation("merge threshold must be non-negative");
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].startTime < events[i - 1].startTime)
            throw ContractViolation("reduce_events requires input sorted by startTime (violated at index " +
                                    std::to_string(i) + ")");
    }

    using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint8_t>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            auto [s, o, op] = k;
            return (static_cast<std::size_t>(s) * 1'000'003u) ^ (static_cast<std::size_t>(o) << 3) ^ op;
        }
    };
    // Output slots are indexed by the position of each chain's first event,
    // so emitting them in slot order preserves startTime order.
    std::vector<SystemEvent> slots;
    slots.reserve(events.size());
    std::unordered_map<Key, std::size_t, KeyHash> open;
    for (const auto& e : events) {
        Key key{to_underlying(e.subject), to_underlying(e.object), static_cast<std::uint8_t>(e.operation)};
        auto it = open.find(key);
        if (it != open.end()) {
            auto& m = slots[it->second];
            const Micros gap = e.startTime - m.endTime;
            if (gap >= 0 && gap <= cfg.mergeThresholdMicros) {
                m.endTime = e.endTime;
                m.dataAmount += e.dataAmount;
                continue;
            }
        }
        slots.push_back(e);
        open[key] = slots.size() - 1;
    }
    return slots;
}

Micros parse_duration(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) != 0)) ++i;
    if (i == 0) throw ValidationError("invalid duration '" + std::string(text) + "'");
    std::int64_t n = 0;
    std::from_chars(text.data(), text.data() + i, n);
    const auto unit = text.substr(i);
    static const std::map<std::string_view, Micros> scale{
        {"", 1},          {"us", 1},        {"ms", 1000},        {"s", kMicrosPerSecond}, {"sec", kMicrosPerSecond},
        {"m", 60 * kMicrosPerSecond},       {"min", 60 * kMicrosPerSecond},               {"h", 3600 * kMicrosPerSecond},
        {"hour", 3600 * kMicrosPerSecond},  {"d", 86400 * kMicrosPerSecond},              {"day", 86400 * kMicrosPerSecond}};
    auto it = scale.find(unit);
    if (it == scale.end()) throw ValidationError("unknown duration unit '" + std::string(unit) + "'");
    return n * it->second;
}

}  // namespace tbhunt
