#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tbhunt/event_store.hpp"
#include "tbhunt/tbql/ast.hpp"

namespace tbhunt::testing {

using Rng = std::mt19937_64;

/// Small fixed vocabularies so random filters actually hit something.
extern const std::vector<std::string> kExenames;
extern const std::vector<std::string> kFilePaths;
extern const std::vector<std::string> kDstIps;
extern const std::vector<std::string> kUsers;

inline constexpr Micros kBaseTime = 1'600'000'000'000'000;

struct StoreParams {
    std::size_t processes = 6;
    std::size_t files = 8;
    std::size_t networks = 4;
    std::size_t events = 200;
    Micros span = 600 * kMicrosPerSecond;
    /// Share of events whose object is a process (start/end).
    double processEventShare = 0.15;
};

/// Tables of a random store; uid == index, events sorted by start time.
struct StoreTables {
    std::vector<SystemEntity> entities;
    std::vector<SystemEvent> events;
};

StoreTables random_tables(Rng& rng, const StoreParams& params);
StoreSnapshot random_store(Rng& rng, const StoreParams& params);

/// Store parameters scaled to an event count (more entities for more events).
StoreParams scaled_params(std::size_t events);

/// A validated query over the vocabularies above, with up to `maxPatterns`
/// patterns. Unbounded path patterns always get a constrained target.
tbql::QueryAst random_query(Rng& rng, const StoreSnapshot& store, int maxPatterns = 3, bool allowPaths = true);

/// A validated AST exercising every grammar production, without regard to
/// whether it would match anything.
tbql::QueryAst random_ast(Rng& rng);

/// Random event stream for reduction tests, sorted by start time. Few
/// distinct (subject, object, operation) keys so merges are frequent.
std::vector<SystemEvent> random_event_stream(Rng& rng, std::size_t count, Micros maxGap);

template <class T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline std::int64_t uniform(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

}  // namespace tbhunt::testing
