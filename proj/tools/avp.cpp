// Command-line pipeline driver: ingest -> build-dataset -> split -> train ->
// evaluate/predict -> report, plus grad-check and inspect utilities. One JSON
// config file drives every stage; flags override config; every stage writes a
// manifest with input hashes and the effective config hash.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "avp/container.hpp"
#include "avp/corpus.hpp"
#include "avp/csv.hpp"
#include "avp/dataset.hpp"
#include "avp/errors.hpp"
#include "avp/grad_check.hpp"
#include "avp/hash.hpp"
#include "avp/labels.hpp"
#include "avp/manifest.hpp"
#include "avp/models.hpp"
#include "avp/report.hpp"
#include "avp/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp {
namespace {

struct RunConfig {
    std::uint64_t seed = 7;
    std::string sequences, metadata, drugvirus, aliases;
    std::string out_dir = "out";
    std::string label_version = "V3";
    std::string dedup_key = "species_length";
    BalanceConfig balance;
    std::string split_mode = "random";
    double split_ratio = 0.8;
    std::vector<std::string> holdout;
    std::size_t n_random_holdouts = 3;
    std::string model_kind = "cnn";
    CnnConfig cnn;
    LstmConfig lstm;
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    double lr = 0.0; // 0 = per-architecture default (cnn 1e-2, lstm 1e-3)
    std::size_t n_runs = 10;
    double metrics_threshold = 0.5;
    double report_threshold = 0.2;
    std::size_t top_k = 20;

    double effective_lr() const {
        if (lr > 0.0) return lr;
        return model_kind == "cnn" ? 1e-2 : 1e-3;
    }

    json to_json() const {
        return {{"seed", seed},
                {"paths",
                 {{"sequences", sequences},
                  {"metadata", metadata},
                  {"drugvirus", drugvirus},
                  {"aliases", aliases},
                  {"out_dir", out_dir}}},
                {"label_version", label_version},
                {"dedup_key", dedup_key},
                {"balance",
                 {{"lower_target", balance.lower_target},
                  {"upper_bound", balance.upper_bound},
                  {"rarity_fraction", balance.rarity_fraction},
                  {"oversample_rule",
                   balance.rule == OversampleRule::Scaled ? "scaled" : "nearest_600"},
                  {"oversample_cap", balance.oversample_cap}}},
                {"split",
                 {{"mode", split_mode},
                  {"ratio", split_ratio},
                  {"holdout", holdout},
                  {"n_random_holdouts", n_random_holdouts}}},
                {"model", {{"kind", model_kind}, {"cnn", cnn}, {"lstm", lstm}}},
                {"train",
                 {{"epochs", epochs},
                  {"batch_size", batch_size},
                  {"lr", lr},
                  {"n_runs", n_runs},
                  {"metrics_threshold", metrics_threshold}}},
                {"report", {{"threshold", report_threshold}, {"top_k", top_k}}}};
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail("io", "cannot open config " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            fail("bad-config", std::string("config parse: ") + e.what());
        }
        if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            sequences = p.value("sequences", sequences);
            metadata = p.value("metadata", metadata);
            drugvirus = p.value("drugvirus", drugvirus);
            aliases = p.value("aliases", aliases);
            out_dir = p.value("out_dir", out_dir);
        }
        label_version = j.value("label_version", label_version);
        dedup_key = j.value("dedup_key", dedup_key);
        if (j.contains("balance")) {
            const auto& b = j["balance"];
            balance.lower_target = b.value("lower_target", balance.lower_target);
            balance.upper_bound = b.value("upper_bound", balance.upper_bound);
            balance.rarity_fraction = b.value("rarity_fraction", balance.rarity_fraction);
            balance.oversample_cap = b.value("oversample_cap", balance.oversample_cap);
            const std::string rule = b.value("oversample_rule", std::string("scaled"));
            if (rule == "scaled") balance.rule = OversampleRule::Scaled;
            else if (rule == "nearest_600") balance.rule = OversampleRule::NearestTo600;
            else fail("bad-config", "unknown oversample_rule '" + rule + "'");
        }
        if (j.contains("split")) {
            const auto& s = j["split"];
            split_mode = s.value("mode", split_mode);
            split_ratio = s.value("ratio", split_ratio);
            holdout = s.value("holdout", holdout);
            n_random_holdouts = s.value("n_random_holdouts", n_random_holdouts);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            model_kind = m.value("kind", model_kind);
            if (m.contains("cnn")) cnn = m["cnn"].get<CnnConfig>();
            if (m.contains("lstm")) lstm = m["lstm"].get<LstmConfig>();
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            epochs = t.value("epochs", epochs);
            batch_size = t.value("batch_size", batch_size);
            lr = t.value("lr", lr);
            n_runs = t.value("n_runs", n_runs);
            metrics_threshold = t.value("metrics_threshold", metrics_threshold);
        }
        if (j.contains("report")) {
            const auto& r = j["report"];
            report_threshold = r.value("threshold", report_threshold);
            top_k = r.value("top_k", top_k);
        }
    }
};

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot write " + path);
    out << text;
}

void require_file(const std::string& path, const std::string& role) {
    if (path.empty()) fail("bad-config", "no path configured for " + role);
    if (!fs::exists(path)) fail("missing-artifact", role + " file " + path + " not found");
}

std::string out_path(const RunConfig& config, const std::string& name) {
    fs::create_directories(config.out_dir);
    return (fs::path(config.out_dir) / name).string();
}

void write_stage_manifest(const RunConfig& config, const std::string& command,
                          const std::map<std::string, std::string>& inputs,
                          const std::vector<std::string>& outputs) {
    Manifest manifest;
    manifest.command = command;
    manifest.config_hash = config_hash(config.to_json());
    manifest.seed = config.seed;
    for (const auto& [role, path] : inputs) manifest.inputs[role + ":" + path] = hash_file(path);
    manifest.outputs = outputs;
    write_manifest(out_path(config, "manifest_" + command + ".json"), manifest);
}

void check_stage(const RunConfig& config, const std::string& upstream_command,
                 bool allow_mismatch) {
    const std::string path = out_path(config, "manifest_" + upstream_command + ".json");
    check_upstream_config(path, config_hash(config.to_json()), allow_mismatch);
}

std::vector<DrugVirusEntry> load_drugvirus(const RunConfig& config) {
    require_file(config.drugvirus, "drugvirus");
    std::ifstream in(config.drugvirus);
    return parse_drugvirus(in);
}

LabelDictionary load_dictionary(const RunConfig& config) {
    const auto entries = load_drugvirus(config);
    return build_label_dictionary(entries, parse_label_version(config.label_version));
}

std::vector<std::string> label_columns_for(const LabelDictionary& dict) {
    std::vector<std::string> columns;
    if (dict.version() == LabelVersion::V2) {
        for (const auto& drug : dict.registry().names())
            for (std::size_t p = 0; p < kPhaseCount; ++p)
                columns.push_back(drug + "|" + std::string(phase_name(static_cast<PhaseStatus>(p))));
    } else {
        columns = dict.registry().names();
    }
    return columns;
}

void write_profile(const std::string& path, const std::vector<LabeledExample>& examples) {
    std::ofstream out(path, std::ios::trunc);
    out << "virus_name\tcount\n";
    for (const auto& [species, count] : profile(examples))
        out << species << '\t' << count << '\n';
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& config) {
    require_file(config.sequences, "sequences");
    require_file(config.metadata, "metadata");
    require_file(config.drugvirus, "drugvirus");
    require_file(config.aliases, "aliases");

    std::ifstream fasta_in(config.sequences);
    const auto sequences = parse_fasta(fasta_in);
    std::ifstream meta_in(config.metadata);
    const auto metadata = parse_metadata(meta_in);
    const auto entries = load_drugvirus(config);
    std::ifstream alias_in(config.aliases);
    const auto aliases = load_alias_table(alias_in, virus_names(entries));

    const auto [merged, report] = merge(sequences, metadata, aliases);

    std::vector<LabeledExample> records;
    auto empty = std::make_shared<const std::vector<std::uint8_t>>();
    for (const auto& rec : merged)
        records.push_back({rec.accession, rec.residues, rec.species, rec.genbank_title, empty});
    std::ostringstream merged_csv;
    write_dataset_csv(merged_csv, records, {});
    spit(out_path(config, "merged.csv"), merged_csv.str());
    spit(out_path(config, "merge_report.json"), report.to_json().dump(2) + "\n");

    const LabelDictionary dict = build_label_dictionary(entries,
                                                        parse_label_version(config.label_version));
    std::ostringstream dict_out;
    write_label_dictionary(dict_out, dict);
    spit(out_path(config, "label_dictionary.csv"), dict_out.str());
    std::string registry_txt;
    for (const auto& name : dict.registry().names()) registry_txt += name + "\n";
    spit(out_path(config, "registry.txt"), registry_txt);

    write_stage_manifest(config, "ingest",
                         {{"sequences", config.sequences},
                          {"metadata", config.metadata},
                          {"drugvirus", config.drugvirus},
                          {"aliases", config.aliases}},
                         {"merged.csv", "merge_report.json", "label_dictionary.csv",
                          "registry.txt"});

    std::cout << "ingest: " << report.matched << " records merged, "
              << report.unmatched_sequences << " unmatched, " << report.unmapped_species
              << " unmapped-species drops\n";
    return 0;
}

int cmd_build_dataset(const RunConfig& config, bool allow_mismatch) {
    const std::string merged_path = out_path(config, "merged.csv");
    require_file(merged_path, "merged records (run ingest first)");
    check_stage(config, "ingest", allow_mismatch);

    std::ifstream merged_in(merged_path);
    const DatasetFile merged = read_dataset_csv(merged_in);
    const LabelDictionary dict = load_dictionary(config);

    std::vector<MergedRecord> records;
    for (const auto& ex : merged.examples)
        records.push_back({ex.accession, ex.residues, ex.species, ex.genbank_title});
    const auto [labeled, attach_report] = attach_labels(records, dict);
    write_profile(out_path(config, "profile_initial.tsv"), labeled);

    const DedupKey key = config.dedup_key == "species_content" ? DedupKey::SpeciesContent
                                                               : DedupKey::SpeciesLength;
    const auto [unique, dedup_report] = deduplicate(labeled, key);
    write_profile(out_path(config, "profile_unique.tsv"), unique);

    const auto [kept, excluded] = exclude_rare(unique, config.balance.rarity_fraction);
    const auto [balanced, balance_report] =
        balance(kept, config.balance, Rng(config.seed).stream("balance"));
    write_profile(out_path(config, "profile_balanced.tsv"), balanced);

    std::ostringstream dataset_csv;
    write_dataset_csv(dataset_csv, balanced, label_columns_for(dict));
    spit(out_path(config, "dataset.csv"), dataset_csv.str());

    json build_report = {{"dedup", dedup_report.to_json()},
                         {"excluded_species", excluded},
                         {"balance", balance_report.to_json()},
                         {"all_zero_label_species", attach_report.all_zero_species},
                         {"final_size", balanced.size()}};
    spit(out_path(config, "build_report.json"), build_report.dump(2) + "\n");

    write_stage_manifest(config, "build-dataset", {{"merged", merged_path}},
                         {"dataset.csv", "build_report.json", "profile_initial.tsv",
                          "profile_unique.tsv", "profile_balanced.tsv"});

    std::cout << "build-dataset: " << labeled.size() << " labeled -> " << unique.size()
              << " unique -> " << kept.size() << " after rarity exclusion -> " << balanced.size()
              << " balanced\n";
    return 0;
}

int cmd_profile(const RunConfig& config, std::string input) {
    if (input.empty()) input = out_path(config, "dataset.csv");
    require_file(input, "profile input");
    std::ifstream in(input);
    const DatasetFile file = read_dataset_csv(in);
    std::cout << "virus_name\tcount\n";
    for (const auto& [species, count] : profile(file.examples))
        std::cout << species << '\t' << count << '\n';
    return 0;
}

int cmd_split(const RunConfig& config, bool allow_mismatch) {
    const std::string dataset_path = out_path(config, "dataset.csv");
    require_file(dataset_path, "dataset (run build-dataset first)");
    check_stage(config, "build-dataset", allow_mismatch);

    std::ifstream in(dataset_path);
    const DatasetFile file = read_dataset_csv(in);

    SplitSpec spec;
    spec.mode = config.split_mode == "by-species" ? SplitSpec::Mode::BySpecies
                                                  : SplitSpec::Mode::Random;
    if (config.split_mode != "by-species" && config.split_mode != "random")
        fail("bad-config", "split mode must be 'random' or 'by-species'");
    spec.ratio = config.split_ratio;
    spec.holdout = config.holdout;
    spec.n_random_holdouts = config.n_random_holdouts;
    spec.seed = config.seed;
    const SplitResult result = split(file.examples, spec);

    std::ostringstream train_csv, eval_csv;
    write_dataset_csv(train_csv, result.train, file.label_columns);
    write_dataset_csv(eval_csv, result.eval, file.label_columns);
    spit(out_path(config, "train.csv"), train_csv.str());
    spit(out_path(config, "eval.csv"), eval_csv.str());
    spit(out_path(config, "split_report.json"), result.report.to_json().dump(2) + "\n");

    write_stage_manifest(config, "split", {{"dataset", dataset_path}},
                         {"train.csv", "eval.csv", "split_report.json"});
    std::cout << "split: " << result.train.size() << " train / " << result.eval.size()
              << " eval examples\n";
    return 0;
}

std::unique_ptr<Model> build_from_config(const RunConfig& config, std::size_t out_dim,
                                         std::uint64_t init_seed) {
    if (config.model_kind == "cnn") {
        CnnConfig c = config.cnn;
        c.out_dim = out_dim;
        return build_cnn(c, init_seed);
    }
    if (config.model_kind == "lstm") {
        LstmConfig c = config.lstm;
        c.out_dim = out_dim;
        return build_lstm(c, init_seed);
    }
    fail("bad-config", "model kind must be 'cnn' or 'lstm'");
}

int cmd_train(const RunConfig& config, bool allow_mismatch, bool quiet) {
    const std::string train_path = out_path(config, "train.csv");
    const std::string eval_path = out_path(config, "eval.csv");
    require_file(train_path, "train split (run split first)");
    require_file(eval_path, "eval split (run split first)");
    check_stage(config, "split", allow_mismatch);

    std::ifstream train_in(train_path), eval_in(eval_path);
    const DatasetFile train_file = read_dataset_csv(train_in);
    const DatasetFile eval_file = read_dataset_csv(eval_in);
    if (train_file.label_columns != eval_file.label_columns)
        fail("bad-artifact", "train and eval files carry different label columns");

    const std::size_t out_dim = train_file.label_columns.size();
    const ClassWeights weights = compute_class_weights(train_file.examples);

    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.lr = config.effective_lr();
    tc.metrics_threshold = config.metrics_threshold;

    std::vector<MetricsSnapshot> finals;
    std::vector<std::string> outputs;
    std::ostringstream metrics_jsonl, metrics_csv;
    metrics_csv << "run,epoch,side,accuracy,precision,recall,f1,loss\n";

    for (std::size_t run = 1; run <= config.n_runs; ++run) {
        const std::uint64_t run_seed =
            Rng(config.seed).stream("run-" + std::to_string(run)).next_u64();
        tc.seed = run_seed;
        auto model = build_from_config(config, out_dim, Rng(run_seed).stream("init").next_u64());

        const auto series = train_model(
            *model, train_file.examples, eval_file.examples, weights, tc,
            [&](const MetricsSnapshot& snap) {
                json line = {{"run", run},
                             {"epoch", snap.epoch},
                             {"side", snap.side},
                             {"accuracy", snap.accuracy},
                             {"precision", snap.precision},
                             {"recall", snap.recall},
                             {"f1", snap.f1},
                             {"loss", snap.loss}};
                metrics_jsonl << line.dump() << '\n';
                metrics_csv << run << ',' << snap.epoch << ',' << snap.side << ',' << snap.accuracy
                            << ',' << snap.precision << ',' << snap.recall << ',' << snap.f1 << ','
                            << snap.loss << '\n';
                if (!quiet)
                    std::cout << "run " << run << " epoch " << snap.epoch << " " << snap.side
                              << ": f1=" << snap.f1 << " loss=" << snap.loss << "\n";
            });

        const std::string ckpt_name = "checkpoint_run" + std::to_string(run) + ".avp";
        save_checkpoint(out_path(config, ckpt_name), *model, run_seed, train_file.label_columns);
        outputs.push_back(ckpt_name);
        for (auto it = series.rbegin(); it != series.rend(); ++it)
            if (it->side == "validation") {
                finals.push_back(*it);
                break;
            }
    }

    spit(out_path(config, "metrics.jsonl"), metrics_jsonl.str());
    spit(out_path(config, "metrics.csv"), metrics_csv.str());
    outputs.push_back("metrics.jsonl");
    outputs.push_back("metrics.csv");

    if (finals.size() >= 2) {
        const RunAggregate agg = aggregate_runs(finals);
        auto stat = [](const AggregateStat& s) {
            return json{{"mean", s.mean}, {"ci95_half_width", s.half_width}};
        };
        const json agg_json = {{"n_runs", agg.n},
                               {"accuracy", stat(agg.accuracy)},
                               {"precision", stat(agg.precision)},
                               {"recall", stat(agg.recall)},
                               {"f1", stat(agg.f1)},
                               {"loss", stat(agg.loss)}};
        spit(out_path(config, "aggregate.json"), agg_json.dump(2) + "\n");
        outputs.push_back("aggregate.json");
        std::cout << "train: " << agg.n << " runs, validation f1 " << agg.f1.mean << " +/- "
                  << agg.f1.half_width << "\n";
    } else if (!finals.empty()) {
        std::cout << "train: validation f1 " << finals.front().f1 << " loss "
                  << finals.front().loss << "\n";
    }

    write_stage_manifest(config, "train", {{"train", train_path}, {"eval", eval_path}}, outputs);
    return 0;
}

Checkpoint load_checkpoint_for(const RunConfig& config, std::string checkpoint) {
    if (checkpoint.empty()) checkpoint = out_path(config, "checkpoint_run1.avp");
    require_file(checkpoint, "checkpoint (run train first)");
    return load_checkpoint(checkpoint);
}

DatasetFile load_examples_for(const RunConfig& config, std::string input, const Checkpoint& ckpt) {
    if (input.empty()) input = out_path(config, "eval.csv");
    require_file(input, "input dataset");
    std::ifstream in(input);
    DatasetFile file = read_dataset_csv(in);
    if (file.label_columns != ckpt.registry)
        fail("config-mismatch",
             "dataset label columns do not match the checkpoint registry; "
             "was the checkpoint trained on a different label version?");
    return file;
}

int cmd_evaluate(const RunConfig& config, const std::string& checkpoint,
                 const std::string& input) {
    const Checkpoint ckpt = load_checkpoint_for(config, checkpoint);
    const DatasetFile file = load_examples_for(config, input, ckpt);
    const MetricsSnapshot m =
        evaluate_model(*ckpt.model, file.examples, config.metrics_threshold, config.batch_size);
    const json out = {{"accuracy", m.accuracy}, {"precision", m.precision},
                      {"recall", m.recall},     {"f1", m.f1},
                      {"loss", m.loss},         {"examples", file.examples.size()}};
    spit(out_path(config, "evaluation.json"), out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_predict(const RunConfig& config, const std::string& checkpoint, const std::string& input,
                const std::string& dump_accession) {
    const Checkpoint ckpt = load_checkpoint_for(config, checkpoint);
    const DatasetFile file = load_examples_for(config, input, ckpt);

    if (!dump_accession.empty()) {
        const LabeledExample* target = nullptr;
        for (const auto& ex : file.examples)
            if (ex.accession == dump_accession) {
                target = &ex;
                break;
            }
        if (!target)
            fail("bad-config", "accession '" + dump_accession + "' not in the input dataset");
        const ActivationDump dump = dump_activations(*ckpt.model, target->residues);
        NamedArrays arrays;
        arrays.header = {{"format", "avp-activations"},
                         {"accession", target->accession},
                         {"virus_name", target->species},
                         {"kind", ckpt.model->kind()}};
        arrays.arrays = dump.stages;
        const std::string name = "activations_" + dump_accession + ".avp";
        write_container(out_path(config, name), arrays);
        std::cout << "predict: wrote " << dump.stages.size() << " activation stages to " << name
                  << "\n";
    }

    const Tensor probs = predict_probabilities(*ckpt.model, file.examples, config.batch_size);

    std::ostringstream probs_csv;
    std::vector<std::string> header{"accession", "virus_name"};
    header.insert(header.end(), ckpt.registry.begin(), ckpt.registry.end());
    probs_csv << csv::format_row(header) << '\n';
    for (std::size_t i = 0; i < file.examples.size(); ++i) {
        std::vector<std::string> row{file.examples[i].accession, file.examples[i].species};
        for (std::size_t d = 0; d < ckpt.registry.size(); ++d) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.12g", probs.at(i, d));
            row.push_back(buf);
        }
        probs_csv << csv::format_row(row) << '\n';
    }
    spit(out_path(config, "probabilities.csv"), probs_csv.str());

    const auto rows = postprocess(probs, file.examples, ckpt.registry, config.report_threshold);
    std::ostringstream pred_csv;
    write_prediction_rows(pred_csv, rows);
    spit(out_path(config, "predictions.csv"), pred_csv.str());

    std::size_t selected = 0;
    for (const auto& r : rows) selected += r.drugs.size();
    std::cout << "predict: " << rows.size() << " sequences, " << selected
              << " drug selections at threshold " << config.report_threshold << "\n";
    return 0;
}

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

int cmd_report(const RunConfig& config, std::vector<std::string> prediction_files,
               const std::string& species_filter) {
    if (prediction_files.empty()) prediction_files.push_back(out_path(config, "predictions.csv"));

    // concatenating run files compounds the counts across runs
    std::vector<PredictionRow> rows;
    for (const auto& path : prediction_files) {
        require_file(path, "predictions");
        std::ifstream in(path);
        const auto batch = read_prediction_rows(in);
        rows.insert(rows.end(), batch.begin(), batch.end());
    }

    std::map<std::string, std::vector<PredictionRow>> by_species;
    for (auto& row : rows) by_species[row.species].push_back(std::move(row));

    bool found = false;
    for (const auto& [species, species_rows] : by_species) {
        if (!species_filter.empty() && species != species_filter) continue;
        found = true;
        const auto summaries = summarize(species_rows, config.top_k);
        std::ostringstream table;
        write_summaries(table, summaries);
        const std::string name = "report_" + sanitize_filename(species) + ".csv";
        spit(out_path(config, name), table.str());
        std::cout << species << " (" << species_rows.size() << " sequence predictions, top "
                  << summaries.size() << "):\n"
                  << table.str() << "\n";
    }
    if (!found)
        fail("bad-config", species_filter.empty()
                               ? "no prediction rows found"
                               : "species '" + species_filter + "' absent from the prediction rows");
    return 0;
}

int cmd_grad_check(const std::string& model_filter, double tolerance, std::uint64_t seed) {
    bool pass = true;
    auto print = [&](const GradCheckItem& item) {
        const bool ok = item.max_rel_err < tolerance;
        pass = pass && ok;
        std::cout << (ok ? "  ok   " : "  FAIL ") << item.name << ": max rel err "
                  << item.max_rel_err << " over " << item.coords_checked << " coordinates\n";
    };

    const bool all = model_filter.empty() || model_filter == "all";
    if (all || model_filter == "primitives") {
        std::cout << "primitives:\n";
        for (const auto& item : primitive_grad_checks(seed).items) print(item);
    }
    if (all || model_filter == "cnn" || model_filter == "lstm") std::cout << "models:\n";
    if (all || model_filter == "cnn") print(model_grad_check("cnn", seed + 1));
    if (all || model_filter == "lstm") print(model_grad_check("lstm", seed + 2));

    std::cout << (pass ? "grad-check: PASS" : "grad-check: FAIL") << " (tolerance " << tolerance
              << ")\n";
    return pass ? 0 : 1;
}

int cmd_inspect(const RunConfig& config, bool paper_exact) {
    std::unique_ptr<Model> model;
    if (config.model_kind == "cnn") {
        CnnConfig c = config.cnn;
        c.paper_exact = paper_exact;
        model = build_cnn(c, config.seed);
    } else {
        model = build_lstm(config.lstm, config.seed);
    }

    std::cout << "model: " << model->kind() << "\n";
    std::printf("%-28s %-22s %12s\n", "layer", "output", "parameters");
    for (const auto& layer : model->layers())
        std::printf("%-28s %-22s %12zu\n", layer.name.c_str(), layer.output_shape.c_str(),
                    layer.param_count);
    std::cout << "trainable_parameters: " << model->parameter_count() << "\n";
    if (model->kind() == "cnn" && paper_exact)
        std::cout << "filters_per_bank " << config.cnn.filters_per_bank
                  << " is the unique bank width reproducing this parameter count\n";
    return 0;
}

} // namespace
} // namespace avp

int main(int argc, char** argv) {
    using namespace avp;

    CLI::App app{"virus protein -> antiviral candidate prediction pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    RunConfig config;
    bool allow_mismatch = false;
    app.add_option("--config", config_path, "JSON run configuration")->envname("AVP_CONFIG");

    // flags overriding the config file (flags win)
    std::string opt_out_dir, opt_model, opt_label_version, opt_split_mode;
    std::uint64_t opt_seed = 0;
    bool seed_set = false;
    app.add_option("--out-dir", opt_out_dir, "artifact directory");
    app.add_option("--seed", opt_seed, "master seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--model", opt_model, "model kind: cnn | lstm");
    app.add_option("--label-version", opt_label_version, "label encoding: V1 | V2 | V3");

    auto* ingest = app.add_subcommand("ingest", "parse and merge the source files");
    auto* build = app.add_subcommand("build-dataset", "label, dedup, exclude and balance");
    auto* profile_cmd = app.add_subcommand("profile", "per-species count table");
    auto* split_cmd = app.add_subcommand("split", "produce train/eval files");
    auto* train_cmd = app.add_subcommand("train", "train one or more seeded runs");
    auto* eval_cmd = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset");
    auto* predict_cmd = app.add_subcommand("predict", "probabilities and thresholded drug lists");
    auto* report_cmd = app.add_subcommand("report", "count/mean-probability ranking tables");
    auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient validation");
    auto* inspect_cmd = app.add_subcommand("inspect", "layer table and parameter count");

    // app-level flags remain usable after the subcommand name
    for (auto* cmd : app.get_subcommands({})) cmd->fallthrough();

    for (auto* cmd : {build, split_cmd, train_cmd})
        cmd->add_flag("--allow-config-mismatch", allow_mismatch,
                      "run even if the upstream manifest was built under another config");

    std::string profile_input;
    profile_cmd->add_option("--input", profile_input, "dataset-shaped csv to profile");

    double opt_ratio = -1.0;
    std::vector<std::string> opt_holdout;
    long long opt_random_holdouts = -1;
    split_cmd->add_option("--mode", opt_split_mode, "random | by-species");
    split_cmd->add_option("--ratio", opt_ratio, "train fraction (random mode)");
    split_cmd->add_option("--holdout", opt_holdout, "holdout species (by-species mode)");
    split_cmd->add_option("--n-random-holdouts", opt_random_holdouts,
                          "extra random holdout species (by-species mode)");

    long long opt_epochs = -1, opt_batch = -1, opt_runs = -1;
    double opt_lr = -1.0;
    bool quiet = false;
    train_cmd->add_option("--epochs", opt_epochs, "training epochs");
    train_cmd->add_option("--batch-size", opt_batch, "minibatch size");
    train_cmd->add_option("--lr", opt_lr, "learning rate");
    train_cmd->add_option("--n-runs", opt_runs, "number of seeded runs");
    train_cmd->add_flag("--quiet", quiet, "suppress per-epoch lines");

    std::string opt_checkpoint, opt_input, opt_dump;
    for (auto* cmd : {eval_cmd, predict_cmd}) {
        cmd->add_option("--checkpoint", opt_checkpoint, "checkpoint file");
        cmd->add_option("--input", opt_input, "dataset csv to run on");
    }
    predict_cmd->add_option("--dump-activations", opt_dump,
                            "write per-layer activation arrays for this accession");

    std::vector<std::string> opt_predictions;
    std::string opt_species;
    long long opt_top_k = -1;
    double opt_threshold = -1.0;
    report_cmd->add_option("--predictions", opt_predictions, "prediction csv files (repeatable)");
    report_cmd->add_option("--species", opt_species, "only this species");
    report_cmd->add_option("--top-k", opt_top_k, "rows per table (0 = all)");
    predict_cmd->add_option("--threshold", opt_threshold, "selection threshold");

    std::string grad_model = "all";
    double grad_tolerance = 1e-4;
    std::uint64_t grad_seed = 1234;
    grad_cmd->add_option("--model", grad_model, "primitives | cnn | lstm | all");
    grad_cmd->add_option("--tolerance", grad_tolerance, "max relative error accepted");
    grad_cmd->add_option("--seed", grad_seed, "seed for random instances");

    bool paper_exact = false;
    inspect_cmd->add_flag("--paper_exact,--paper-exact", paper_exact,
                          "require the published 209,022-parameter topology");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) config.load(config_path);
        if (!opt_out_dir.empty()) config.out_dir = opt_out_dir;
        if (seed_set) config.seed = opt_seed;
        if (!opt_model.empty()) config.model_kind = opt_model;
        if (!opt_label_version.empty()) config.label_version = opt_label_version;
        if (!opt_split_mode.empty()) config.split_mode = opt_split_mode;
        if (opt_ratio >= 0.0) config.split_ratio = opt_ratio;
        if (!opt_holdout.empty()) config.holdout = opt_holdout;
        if (opt_random_holdouts >= 0)
            config.n_random_holdouts = static_cast<std::size_t>(opt_random_holdouts);
        if (opt_epochs > 0) config.epochs = static_cast<std::size_t>(opt_epochs);
        if (opt_batch > 0) config.batch_size = static_cast<std::size_t>(opt_batch);
        if (opt_lr > 0.0) config.lr = opt_lr;
        if (opt_runs > 0) config.n_runs = static_cast<std::size_t>(opt_runs);
        if (opt_threshold > 0.0) config.report_threshold = opt_threshold;
        if (opt_top_k >= 0) config.top_k = static_cast<std::size_t>(opt_top_k);

        if (ingest->parsed()) return cmd_ingest(config);
        if (build->parsed()) return cmd_build_dataset(config, allow_mismatch);
        if (profile_cmd->parsed()) return cmd_profile(config, profile_input);
        if (split_cmd->parsed()) return cmd_split(config, allow_mismatch);
        if (train_cmd->parsed()) return cmd_train(config, allow_mismatch, quiet);
        if (eval_cmd->parsed()) return cmd_evaluate(config, opt_checkpoint, opt_input);
        if (predict_cmd->parsed()) return cmd_predict(config, opt_checkpoint, opt_input, opt_dump);
        if (report_cmd->parsed()) return cmd_report(config, opt_predictions, opt_species);
        if (grad_cmd->parsed()) return cmd_grad_check(grad_model, grad_tolerance, grad_seed);
        if (inspect_cmd->parsed()) return cmd_inspect(config, paper_exact);
    } catch (const Error& e) {
        std::cerr << "error: " << e.class_id() << ": " << e.message() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
