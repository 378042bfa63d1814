#include <iostream>

#include <CLI11.hpp>

#include "tbhunt/cli.hpp"
#include "tbhunt/ingestion.hpp"

namespace cli = tbhunt::cli;

int main(int argc, char** argv) {
    CLI::App app{"Threat hunting over system audit logs with TBQL"};
    app.require_subcommand(1);

    std::string log, snapshot, graph, queryFile, inlineQuery, mergeThreshold = "1s", mode = "exact";
    std::string rules, plan;
    bool json = false, explain = false, paths = false;
    cli::RunOptions run;

    auto* ingest = app.add_subcommand("ingest", "Parse an NDJSON audit log, reduce it and write a snapshot");
    ingest->add_option("log", log, "NDJSON audit log")->required();
    ingest->add_option("-o,--out", snapshot, "Snapshot file to write")->required();
    ingest->add_option("--merge-threshold", mergeThreshold, "Reduction threshold, e.g. 1s, 500ms, 0s");
    ingest->add_flag("--json", json, "Print statistics as JSON");

    auto* synth = app.add_subcommand("synthesize", "Synthesize a TBQL query from a threat behavior graph");
    synth->add_option("graph", graph, "Threat behavior graph JSON")->required();
    synth->add_option("--rules", rules, "Relation mapping rules JSON");
    synth->add_option("--plan", plan, "Synthesis plan JSON");
    synth->add_flag("--paths", paths, "Synthesize variable-length path patterns");

    auto* runCmd = app.add_subcommand("run", "Run a TBQL query against a snapshot");
    runCmd->add_option("snapshot", snapshot, "Snapshot file")->required();
    auto* fileOpt = runCmd->add_option("query-file", queryFile, "TBQL query file");
    auto* inlineOpt = runCmd->add_option("-e,--query", inlineQuery, "Inline TBQL query text");
    fileOpt->excludes(inlineOpt);
    runCmd->add_option("--mode", mode, "exact or fuzzy")->check(CLI::IsMember({"exact", "fuzzy"}));
    runCmd->add_option("--node-threshold", run.nodeThreshold, "Fuzzy node similarity threshold")
        ->check(CLI::Range(0.0, 1.0));
    runCmd->add_option("--score-threshold", run.scoreThreshold, "Fuzzy alignment score threshold")
        ->check(CLI::Range(0.0, 1.0));
    runCmd->add_option("--path-cap", run.pathCap, "Maximum path length")->check(CLI::PositiveNumber);
    runCmd->add_option("--budget", run.budget, "Search budget (0 = unlimited)");
    runCmd->add_flag("--explain", explain, "Report schedule, scan counters and timings");
    runCmd->add_flag("--json", json, "NDJSON rows");

    auto* baseline = app.add_subcommand("baseline", "Print SQL and Cypher renderings of a query");
    auto* baseFile = baseline->add_option("query-file", queryFile, "TBQL query file");
    auto* baseInline = baseline->add_option("-e,--query", inlineQuery, "Inline TBQL query text");
    baseFile->excludes(baseInline);

    auto* repl = app.add_subcommand("repl", "Interactive session");
    repl->add_option("snapshot", snapshot, "Snapshot to load at start");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kInputError;
    }

    auto query_text = [&](std::string& text) {
        if (!inlineQuery.empty()) {
            text = inlineQuery;
            return true;
        }
        if (queryFile.empty()) {
            std::cerr << "error: give a query file or --query\n";
            return false;
        }
        try {
            text = cli::read_text_file(queryFile);
            return true;
        } catch (const tbhunt::Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return false;
        }
    };

    if (ingest->parsed()) {
        tbhunt::Micros threshold = 0;
        try {
            threshold = tbhunt::parse_duration(mergeThreshold);
        } catch (const tbhunt::Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return cli::kInputError;
        }
        return cli::command_ingest(log, snapshot, threshold, json, std::cout, std::cerr);
    }
    if (synth->parsed()) {
        cli::SynthesizeOptions options;
        if (!rules.empty()) options.rules = rules;
        if (!plan.empty()) options.plan = plan;
        options.paths = paths;
        return cli::command_synthesize(graph, options, std::cout, std::cerr);
    }
    if (runCmd->parsed()) {
        std::string text;
        if (!query_text(text)) return cli::kInputError;
        run.fuzzy = mode == "fuzzy";
        run.explain = explain;
        run.json = json;
        return cli::command_run(text, std::filesystem::path(snapshot), run, std::cout, std::cerr);
    }
    if (baseline->parsed()) {
        std::string text;
        if (!query_text(text)) return cli::kInputError;
        return cli::command_baseline(text, std::cout, std::cerr);
    }
    cli::Repl session(std::cin, std::cout, std::cerr);
    if (!snapshot.empty()) session.execute("load " + snapshot);
    return session.run();
}
