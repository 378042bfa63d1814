#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tbhunt/event_store.hpp"

namespace tbhunt::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kEmptySynthesis = 3, kBudgetExhausted = 4 };

struct RunOptions {
    bool fuzzy = false;
    double nodeThreshold = 0.8;
    double scoreThreshold = 1.0 / 3.0;
    int pathCap = 8;
    std::uint64_t budget = 1'000'000;
    bool explain = false;
    bool json = false;
};

struct SynthesizeOptions {
    std::optional<std::filesystem::path> rules;
    std::optional<std::filesystem::path> plan;
    bool paths = false;
};

/// Config directory from TBQL_HOME, if set.
std::optional<std::filesystem::path> config_home();

int command_ingest(const std::filesystem::path& log, const std::filesystem::path& snapshot, Micros mergeThreshold,
                   bool json, std::ostream& out, std::ostream& err);

/// Writes the synthesized query to `out`; `text` receives it too when given.
int command_synthesize(const std::filesystem::path& graph, const SynthesizeOptions& options, std::ostream& out,
                       std::ostream& err, std::string* text = nullptr);

int command_run(const std::string& query, const StoreSnapshot& snapshot, const RunOptions& options, std::ostream& out,
                std::ostream& err);

/// Loads the snapshot, then behaves like the overload above.
int command_run(const std::string& query, const std::filesystem::path& snapshot, const RunOptions& options,
                std::ostream& out, std::ostream& err);

int command_baseline(const std::string& query, std::ostream& out, std::ostream& err);

std::string read_text_file(const std::filesystem::path& file);

/// Interactive session: the batch verbs plus `edit`, `history`, `set`, `show`.
class Repl {
public:
    Repl(std::istream& in, std::ostream& out, std::ostream& err);
    ~Repl();

    /// Processes lines until `quit` or end of input; returns the last
    /// command's exit code.
    int run();
    /// Executes one command line.
    int execute(const std::string& line);

    const std::vector<std::string>& history() const { return history_; }
    const std::string& current_query() const { return query_; }

private:
    std::istream& in_;
    std::ostream& out_;
    std::ostream& err_;
    std::unique_ptr<StoreSnapshot> snapshot_;
    std::string query_;
    RunOptions options_;
    std::vector<std::string> history_;
};

}  // namespace tbhunt::cli
