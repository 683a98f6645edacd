#include "avp/dataset.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "avp/csv.hpp"
#include "avp/errors.hpp"

namespace avp {

nlohmann::json DedupReport::to_json() const {
    nlohmann::json species = nlohmann::json::object();
    for (const auto& [name, counts] : per_species)
        species[name] = {{"before", counts.first}, {"after", counts.second}};
    return {{"before", before}, {"after", after}, {"per_species", species}};
}

std::pair<std::vector<LabeledExample>, DedupReport> deduplicate(
    const std::vector<LabeledExample>& examples, DedupKey key) {
    DedupReport report;
    report.before = examples.size();
    std::unordered_set<std::string> seen;
    std::vector<LabeledExample> kept;
    kept.reserve(examples.size());
    for (const auto& ex : examples) {
        ++report.per_species[ex.species].first;
        std::string k = ex.species;
        k += '\x1f';
        if (key == DedupKey::SpeciesLength)
            k += std::to_string(ex.residues.size());
        else
            k += ex.residues;
        if (!seen.insert(std::move(k)).second) continue;
        ++report.per_species[ex.species].second;
        kept.push_back(ex);
    }
    report.after = kept.size();
    return {std::move(kept), std::move(report)};
}

std::pair<std::vector<LabeledExample>, std::vector<std::string>> exclude_rare(
    const std::vector<LabeledExample>& examples, double rarity_fraction) {
    if (rarity_fraction <= 0.0 || rarity_fraction >= 1.0)
        fail("bad-config", "rarity fraction must be in (0, 1)");
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : examples) ++counts[ex.species];
    const double threshold = rarity_fraction * static_cast<double>(examples.size());

    std::set<std::string> excluded;
    for (const auto& [species, count] : counts)
        if (static_cast<double>(count) < threshold) excluded.insert(species);

    std::vector<LabeledExample> kept;
    kept.reserve(examples.size());
    for (const auto& ex : examples)
        if (excluded.count(ex.species) == 0) kept.push_back(ex);
    return {std::move(kept), std::vector<std::string>(excluded.begin(), excluded.end())};
}

std::size_t oversample_factor(std::size_t count, const BalanceConfig& config) {
    if (count == 0) fail("internal", "oversample factor of an empty species");
    switch (config.rule) {
        case OversampleRule::Scaled: {
            // exact integers: ceil(1.3 * lower_target / c) = ceil(13*lower / (10*c))
            const std::size_t num = 13 * config.lower_target;
            const std::size_t den = 10 * count;
            std::size_t k = (num + den - 1) / den;
            const std::size_t cap = config.oversample_cap / count;
            if (cap > 0 && k > cap) k = cap;
            if (k == 0) k = 1;
            return k;
        }
        case OversampleRule::NearestTo600: {
            const std::size_t target = 600;
            std::size_t lo = target / count;
            std::size_t hi = (target + count - 1) / count;
            if (lo == 0 || lo * count < config.lower_target) lo = hi;
            if (hi * count < config.lower_target) hi = (config.lower_target + count - 1) / count;
            auto dist = [&](std::size_t k) {
                const std::size_t v = k * count;
                return v > target ? v - target : target - v;
            };
            // ties prefer the smaller k
            return dist(lo) <= dist(hi) ? lo : hi;
        }
    }
    fail("bad-config", "invalid oversample rule");
}

std::pair<std::vector<LabeledExample>, BalanceReport> balance(
    const std::vector<LabeledExample>& examples, const BalanceConfig& config, Rng rng) {
    if (config.lower_target > config.upper_bound)
        fail("bad-config", "balance lower_target exceeds upper_bound");

    // group by species, keeping original positions for deterministic output
    std::map<std::string, std::vector<std::size_t>> by_species;
    for (std::size_t i = 0; i < examples.size(); ++i)
        by_species[examples[i].species].push_back(i);

    BalanceReport report;
    std::vector<LabeledExample> out;
    out.reserve(examples.size());
    for (const auto& [species, indices] : by_species) {
        const std::size_t c = indices.size();
        if (c == 0) fail("internal", "species bucket is empty");
        BalanceReport::SpeciesRow row;
        row.before = c;
        if (c > config.upper_bound) {
            Rng species_rng = rng.stream("undersample/" + species);
            const auto picks = species_rng.sample_indices(c, config.upper_bound);
            for (std::size_t p : picks) out.push_back(examples[indices[p]]);
            row.after = config.upper_bound;
            row.undersampled = true;
        } else if (c < config.lower_target) {
            const std::size_t k = oversample_factor(c, config);
            for (std::size_t idx : indices)
                for (std::size_t r = 0; r < k; ++r) out.push_back(examples[idx]);
            row.after = k * c;
            row.replication = k;
        } else {
            for (std::size_t idx : indices) out.push_back(examples[idx]);
            row.after = c;
        }
        report.per_species[species] = row;
    }
    return {std::move(out), std::move(report)};
}

nlohmann::json BalanceReport::to_json() const {
    nlohmann::json species = nlohmann::json::object();
    for (const auto& [name, row] : per_species)
        species[name] = {{"before", row.before},
                         {"after", row.after},
                         {"replication", row.replication},
                         {"undersampled", row.undersampled}};
    return {{"per_species", species}};
}

ClassWeights compute_class_weights(const std::vector<LabeledExample>& examples) {
    if (examples.empty()) fail("empty-dataset", "class weights need at least one example");
    const std::size_t dim = examples.front().labels->size();
    std::vector<std::size_t> positives(dim, 0);
    for (const auto& ex : examples) {
        if (ex.labels->size() != dim)
            fail("shape-mismatch", "inconsistent label vector lengths in dataset");
        for (std::size_t d = 0; d < dim; ++d) positives[d] += (*ex.labels)[d];
    }

    const double n = static_cast<double>(examples.size());
    constexpr double kMin = 0.05, kMax = 20.0;
    ClassWeights weights;
    weights.positive.resize(dim);
    weights.negative.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        const double p = static_cast<double>(positives[d]);
        const double wp = n / (2.0 * std::max(p, 1.0));
        const double wn = n / (2.0 * std::max(n - p, 1.0));
        weights.positive[d] = std::clamp(wp, kMin, kMax);
        weights.negative[d] = std::clamp(wn, kMin, kMax);
    }
    return weights;
}

nlohmann::json SplitReport::to_json() const {
    return {{"train_per_species", train_per_species},
            {"eval_per_species", eval_per_species},
            {"holdout_species", holdout_species}};
}

SplitResult split(const std::vector<LabeledExample>& examples, const SplitSpec& spec) {
    SplitResult result;

    if (spec.mode == SplitSpec::Mode::Random) {
        if (spec.ratio <= 0.0 || spec.ratio >= 1.0)
            fail("bad-config", "random split ratio must be in (0, 1)");
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = Rng(spec.seed).stream("split/random");
        rng.shuffle(order);
        const auto train_count =
            static_cast<std::size_t>(spec.ratio * static_cast<double>(examples.size()));
        if (train_count == 0 || train_count == examples.size())
            fail("empty-split", "split leaves one side empty");
        for (std::size_t i = 0; i < order.size(); ++i) {
            const LabeledExample& ex = examples[order[i]];
            if (i < train_count) {
                result.train.push_back(ex);
                ++result.report.train_per_species[ex.species];
            } else {
                result.eval.push_back(ex);
                ++result.report.eval_per_species[ex.species];
            }
        }
        return result;
    }

    // BySpecies: SARS-CoV-2 pinned, extra named holdouts, then random draws
    std::set<std::string> species_present;
    for (const auto& ex : examples) species_present.insert(ex.species);

    std::set<std::string> holdout(spec.holdout.begin(), spec.holdout.end());
    holdout.insert(kPinnedHoldout);
    for (const auto& name : holdout)
        if (species_present.count(name) == 0)
            fail("holdout-not-found", "holdout species '" + name + "' is absent from the data");

    std::vector<std::string> remaining;
    for (const auto& name : species_present)
        if (holdout.count(name) == 0) remaining.push_back(name);
    Rng rng = Rng(spec.seed).stream("split/by-species");
    for (std::size_t draw = 0; draw < spec.n_random_holdouts && !remaining.empty(); ++draw) {
        const std::size_t pick = static_cast<std::size_t>(rng.below(remaining.size()));
        holdout.insert(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    for (const auto& ex : examples) {
        if (holdout.count(ex.species)) {
            result.eval.push_back(ex);
            ++result.report.eval_per_species[ex.species];
        } else {
            result.train.push_back(ex);
            ++result.report.train_per_species[ex.species];
        }
    }
    result.report.holdout_species.assign(holdout.begin(), holdout.end());
    if (result.train.empty() || result.eval.empty())
        fail("empty-split", "split leaves one side empty");
    return result;
}

std::vector<std::pair<std::string, std::size_t>> profile(
    const std::vector<LabeledExample>& examples) {
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : examples) ++counts[ex.species];
    std::vector<std::pair<std::string, std::size_t>> rows(counts.begin(), counts.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return rows;
}

void write_dataset_csv(std::ostream& out, const std::vector<LabeledExample>& examples,
                       const std::vector<std::string>& label_columns) {
    std::vector<std::string> header{"accession", "sequence", "virus_name", "genbank_title"};
    header.insert(header.end(), label_columns.begin(), label_columns.end());
    out << csv::format_row(header) << '\n';
    for (const auto& ex : examples) {
        if (ex.labels->size() != label_columns.size())
            fail("shape-mismatch", "example " + ex.accession + " has " +
                                       std::to_string(ex.labels->size()) + " labels, header has " +
                                       std::to_string(label_columns.size()));
        std::vector<std::string> row{ex.accession, ex.residues, ex.species, ex.genbank_title};
        for (std::uint8_t bit : *ex.labels) row.push_back(bit ? "1" : "0");
        out << csv::format_row(row) << '\n';
    }
}

DatasetFile read_dataset_csv(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty()) fail("bad-artifact", "dataset file is empty");
    const auto& header = rows.front();
    // four fixed columns; merged files carry no label columns yet
    if (header.size() < 4 || header[0] != "accession")
        fail("bad-artifact", "dataset file has an unexpected header");

    DatasetFile file;
    file.label_columns.assign(header.begin() + 4, header.end());

    // identical label vectors are shared between rows
    std::map<std::vector<std::uint8_t>, std::shared_ptr<std::vector<std::uint8_t>>> pool;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            fail("row-arity", "dataset row " + std::to_string(r + 1) + " has " +
                                  std::to_string(row.size()) + " fields");
        std::vector<std::uint8_t> labels(file.label_columns.size());
        for (std::size_t d = 0; d < labels.size(); ++d) {
            const std::string& cell = row[4 + d];
            if (cell != "0" && cell != "1")
                fail("bad-artifact", "dataset row " + std::to_string(r + 1) +
                                         " has non-binary label '" + cell + "'");
            labels[d] = cell == "1" ? 1 : 0;
        }
        auto it = pool.find(labels);
        if (it == pool.end())
            it = pool.emplace(labels, std::make_shared<std::vector<std::uint8_t>>(labels)).first;
        file.examples.push_back({row[0], row[1], row[2], row[3], it->second});
    }
    return file;
}

} // namespace avp
