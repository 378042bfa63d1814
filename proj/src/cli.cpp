#include "tbhunt/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "tbhunt/fuzzy_match.hpp"
#include "tbhunt/ingestion.hpp"
#include "tbhunt/query_planner.hpp"
#include "tbhunt/synthesis.hpp"
#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt::cli {

namespace {

nlohmann::json to_json(const Value& v) {
    if (const auto* n = std::get_if<std::int64_t>(&v)) return *n;
    return std::get<std::string>(v);
}

void print_table(std::ostream& out, const std::vector<std::string>& columns,
                 const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out << (c ? "  " : "") << cells[c];
            if (c + 1 < cells.size()) out << std::string(width[c] - cells[c].size(), ' ');
        }
        out << "\n";
    };
    line(columns);
    std::vector<std::string> rule;
    for (auto w : width) rule.emplace_back(w, '-');
    line(rule);
    for (const auto& r : rows) line(r);
    out << "(" << rows.size() << (rows.size() == 1 ? " row)\n" : " rows)\n");
}

/// Maps engine exceptions to exit codes; shared by every command.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const SynthesisEmpty& e) {
        err << "error: " << e.what() << "\n";
        return kEmptySynthesis;
    } catch (const BudgetExceeded& e) {
        err << "error: " << e.what() << "\n";
        return kBudgetExhausted;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
}

std::optional<std::filesystem::path> config_file(const char* name) {
    if (auto home = config_home()) {
        auto p = *home / name;
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::filesystem::path> config_home() {
    if (const char* v = std::getenv("TBQL_HOME"); v && *v) return std::filesystem::path(v);
    return std::nullopt;
}

std::string read_text_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int command_ingest(const std::filesystem::path& log, const std::filesystem::path& snapshot, Micros mergeThreshold,
                   bool json, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto parsed = parse_records(log);
        for (const auto& d : parsed.diagnostics) err << log.string() << ":" << d.line << ": " << d.message << "\n";
        const auto raw = parsed.events.size();
        auto reduced = reduce_events(parsed.events, ReductionConfig{mergeThreshold});
        const auto kept = reduced.size();
        const auto entities = parsed.entities.size();
        persist(StoreSnapshot::load(std::move(parsed.entities), std::move(reduced)), snapshot);
        if (json) {
            out << nlohmann::json{{"entities", entities},
                                  {"rawEvents", raw},
                                  {"reducedEvents", kept},
                                  {"skipped", parsed.skipped},
                                  {"snapshot", snapshot.string()}}
                       .dump()
                << "\n";
        } else {
            out << "entities: " << entities << "\n"
                << "events: " << raw << " raw -> " << kept << " reduced\n"
                << "skipped: " << parsed.skipped << "\n"
                << "snapshot: " << snapshot.string() << "\n";
        }
        return kOk;
    });
}

int command_synthesize(const std::filesystem::path& graphFile, const SynthesizeOptions& options, std::ostream& out,
                       std::ostream& err, std::string* text) {
    return guarded(err, [&] {
        const auto graph = load_graph(graphFile);
        const auto rulesFile = options.rules ? options.rules : config_file("relation_rules.json");
        const auto rules = rulesFile ? load_rules(*rulesFile) : RelationMappingRules::defaults();
        const auto planFile = options.plan ? options.plan : config_file("synthesis_plan.json");
        auto plan = planFile ? load_plan(*planFile) : SynthesisPlan{};
        if (options.paths) plan.usePathPatterns = true;
        auto report = [&](const std::vector<DroppedItem>& dropped) {
            for (const auto& d : dropped)
                err << "dropped " << (d.kind == DroppedItem::Kind::Node ? "node " : "edge ") << d.id << ": "
                    << d.reason << "\n";
        };
        Synthesis result;
        try {
            result = synthesize(graph, rules, plan);
        } catch (const SynthesisEmpty&) {
            report(screen(graph, rules).dropped);
            throw;
        }
        report(result.dropped);
        const auto printed = tbql::pretty_print(result.query);
        out << printed;
        if (text) *text = printed;
        return kOk;
    });
}

int command_run(const std::string& query, const StoreSnapshot& snapshot, const RunOptions& options, std::ostream& out,
                std::ostream& err) {
    return guarded(err, [&] {
        const auto ast = tbql::parse(query);
        if (options.fuzzy) {
            FuzzyOptions fo;
            fo.nodeThreshold = options.nodeThreshold;
            fo.scoreThreshold = options.scoreThreshold;
            fo.pathCap = options.pathCap;
            fo.budget = options.budget;
            const auto result = search_alignments(ast, snapshot, fo);
            if (options.json) {
                for (const auto& a : result.alignments) {
                    nlohmann::json row;
                    for (std::size_t c = 0; c < result.columns.size(); ++c) row[result.columns[c]] = to_json(a.projected[c]);
                    row["score"] = a.score;
                    out << row.dump() << "\n";
                }
                if (options.explain) out << alignment_report_json(result, snapshot) << "\n";
            } else {
                auto columns = result.columns;
                columns.push_back("score");
                std::vector<std::vector<std::string>> rows;
                for (const auto& a : result.alignments) {
                    std::vector<std::string> r;
                    for (const auto& v : a.projected) r.push_back(value_to_string(v));
                    std::ostringstream s;
                    s << std::fixed << std::setprecision(4) << a.score;
                    r.push_back(s.str());
                    rows.push_back(std::move(r));
                }
                print_table(out, columns, rows);
                if (options.explain) out << alignment_report_json(result, snapshot) << "\n";
            }
            for (const auto& id : result.unmatchedEntities)
                err << "warning: no store entity aligns with '" << id << "'\n";
            if (result.budgetExhausted) {
                err << "warning: search budget of " << options.budget << " exhausted; results are partial\n";
                return kBudgetExhausted;
            }
            return kOk;
        }

        PlannerOptions po;
        po.pathCap = options.pathCap;
        po.maxExpansions = options.budget;
        const auto plan = build_plan(ast, po);
        const auto result = execute(plan, snapshot, po);
        if (options.json) {
            for (const auto& r : result.rows) {
                nlohmann::json row;
                for (std::size_t c = 0; c < result.columns.size(); ++c) row[result.columns[c]] = to_json(r.projected[c]);
                out << row.dump() << "\n";
            }
            if (options.explain) out << nlohmann::json{{"explain", nlohmann::json::parse(explain_json(plan, result.stats))}}.dump() << "\n";
        } else {
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : result.rows) {
                std::vector<std::string> cells;
                for (const auto& v : r.projected) cells.push_back(value_to_string(v));
                rows.push_back(std::move(cells));
            }
            print_table(out, result.columns, rows);
            if (options.explain) out << explain_text(plan, result.stats) << explain_json(plan, result.stats) << "\n";
        }
        return kOk;
    });
}

int command_run(const std::string& query, const std::filesystem::path& snapshot, const RunOptions& options,
                std::ostream& out, std::ostream& err) {
    std::optional<StoreSnapshot> store;
    if (const int rc = guarded(err, [&] {
            store = restore(snapshot);
            return kOk;
        }))
        return rc;
    return command_run(query, *store, options, out, err);
}

int command_baseline(const std::string& query, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto ast = tbql::parse(query);
        const auto baseline = emit_baseline_query_text(ast);
        for (const auto& n : baseline.notices) err << "note: " << n << "\n";
        const auto tbqlChars = tbql::count_query_chars(query);
        out << "-- TBQL: " << tbqlChars << " chars\n";
        if (baseline.tabular)
            out << "-- SQL: " << tbql::count_query_chars(*baseline.tabular) << " chars\n" << *baseline.tabular;
        out << "-- Cypher: " << tbql::count_query_chars(baseline.graph) << " chars\n" << baseline.graph;
        return kOk;
    });
}

// ----------------------------------------------------------------------------
// REPL
// ----------------------------------------------------------------------------

Repl::Repl(std::istream& in, std::ostream& out, std::ostream& err) : in_(in), out_(out), err_(err) {}
Repl::~Repl() = default;

namespace {

std::vector<std::string> split_words(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    return words;
}

constexpr const char* kHelp =
    "commands:\n"
    "  load <snapshot>                      load a snapshot\n"
    "  ingest <log> <snapshot> [<dur>]      parse, reduce and load an audit log\n"
    "  synthesize <graph.json> [--paths]    synthesize a query and make it current\n"
    "  query <tbql...>                      set the current query\n"
    "  open <file>                          read the current query from a file\n"
    "  run [<file> | <tbql...>]             run the given or current query\n"
    "  baseline                             show SQL / Cypher renderings of the current query\n"
    "  show                                 print the current query\n"
    "  edit                                 edit the current query in $EDITOR\n"
    "  set mode exact|fuzzy | explain on|off | json on|off\n"
    "  set node-threshold <f> | score-threshold <f> | path-cap <n> | budget <n>\n"
    "  history                              list previous commands\n"
    "  quit\n";

}  // namespace

int Repl::run() {
    int rc = kOk;
    std::string line;
    while (true) {
        out_ << "tbql> " << std::flush;
        if (!std::getline(in_, line)) break;
        const auto words = split_words(line);
        if (words.empty()) continue;
        if (words[0] == "quit" || words[0] == "exit") break;
        rc = execute(line);
    }
    return rc;
}

int Repl::execute(const std::string& line) {
    const auto words = split_words(line);
    if (words.empty()) return kOk;
    history_.push_back(line);
    const auto& verb = words[0];
    const auto rest = line.substr(std::min(line.size(), line.find(verb) + verb.size()));
    auto usage = [&](const char* text) {
        err_ << "usage: " << text << "\n";
        return kInputError;
    };

    if (verb == "help") {
        out_ << kHelp;
        return kOk;
    }
    if (verb == "history") {
        for (std::size_t i = 0; i < history_.size(); ++i) out_ << std::setw(4) << i + 1 << "  " << history_[i] << "\n";
        return kOk;
    }
    if (verb == "load") {
        if (words.size() != 2) return usage("load <snapshot>");
        return guarded(err_, [&] {
            snapshot_ = std::make_unique<StoreSnapshot>(restore(words[1]));
            out_ << "loaded " << snapshot_->entity_count() << " entities, " << snapshot_->event_count() << " events\n";
            return kOk;
        });
    }
    if (verb == "ingest") {
        if (words.size() < 3 || words.size() > 4) return usage("ingest <log> <snapshot> [<merge-threshold>]");
        return guarded(err_, [&] {
            const Micros threshold = words.size() == 4 ? parse_duration(words[3]) : kMicrosPerSecond;
            const int rc = command_ingest(words[1], words[2], threshold, options_.json, out_, err_);
            if (rc == kOk) snapshot_ = std::make_unique<StoreSnapshot>(restore(words[2]));
            return rc;
        });
    }
    if (verb == "synthesize") {
        if (words.size() < 2) return usage("synthesize <graph.json> [--paths]");
        SynthesizeOptions so;
        so.paths = std::find(words.begin(), words.end(), "--paths") != words.end();
        std::string text;
        const int rc = command_synthesize(words[1], so, out_, err_, &text);
        if (rc == kOk) query_ = text;
        return rc;
    }
    if (verb == "query") {
        query_ = rest;
        return kOk;
    }
    if (verb == "open") {
        if (words.size() != 2) return usage("open <file>");
        return guarded(err_, [&] {
            query_ = read_text_file(words[1]);
            return kOk;
        });
    }
    if (verb == "show") {
        out_ << query_ << (query_.empty() || query_.back() == '\n' ? "" : "\n");
        return kOk;
    }
    if (verb == "edit") {
        const char* editor = std::getenv("EDITOR");
        if (!editor || !*editor) {
            err_ << "error: EDITOR is not set\n";
            return kInputError;
        }
        const auto file = std::filesystem::temp_directory_path() / "tbhunt_query.tbql";
        std::ofstream(file) << query_;
        const std::string cmd = std::string(editor) + " '" + file.string() + "'";
        if (std::system(cmd.c_str()) != 0) {
            err_ << "error: editor exited with an error\n";
            return kInputError;
        }
        return guarded(err_, [&] {
            query_ = read_text_file(file);
            return kOk;
        });
    }
    if (verb == "set") {
        if (words.size() != 3) return usage("set <option> <value>");
        const auto& key = words[1];
        const auto& value = words[2];
        try {
            if (key == "mode" && (value == "exact" || value == "fuzzy")) {
                options_.fuzzy = value == "fuzzy";
            } else if ((key == "explain" || key == "json") && (value == "on" || value == "off")) {
                (key == "explain" ? options_.explain : options_.json) = value == "on";
            } else if (key == "node-threshold") {
                options_.nodeThreshold = std::stod(value);
            } else if (key == "score-threshold") {
                options_.scoreThreshold = std::stod(value);
            } else if (key == "path-cap") {
                options_.pathCap = std::stoi(value);
            } else if (key == "budget") {
                options_.budget = std::stoull(value);
            } else {
                return usage("set mode exact|fuzzy | explain on|off | json on|off | node-threshold <f> | ...");
            }
        } catch (const std::logic_error&) {
            err_ << "error: invalid value '" << value << "' for " << key << "\n";
            return kInputError;
        }
        return kOk;
    }
    if (verb == "run") {
        if (words.size() == 2 && std::filesystem::is_regular_file(words[1])) {
            const int rc = guarded(err_, [&] {
                query_ = read_text_file(words[1]);
                return kOk;
            });
            if (rc) return rc;
        } else if (words.size() > 1) {
            query_ = rest;
        }
        if (!snapshot_) {
            err_ << "error: no snapshot loaded (use load or ingest)\n";
            return kInputError;
        }
        if (query_.empty()) {
            err_ << "error: no current query\n";
            return kInputError;
        }
        return command_run(query_, *snapshot_, options_, out_, err_);
    }
    if (verb == "baseline") return command_baseline(query_, out_, err_);

    err_ << "error: unknown command '" << verb << "' (try help)\n";
    return kInputError;
}

}  // namespace tbhunt::cli
