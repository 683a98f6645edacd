#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "avp/labels.hpp"
#include "avp/rng.hpp"

namespace avp {

enum class DedupKey { SpeciesLength, SpeciesContent };

struct DedupReport {
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_species; // before, after
    std::size_t before = 0;
    std::size_t after = 0;
    nlohmann::json to_json() const;
};

// Keeps the first example per (species, residue length) key in input order.
std::pair<std::vector<LabeledExample>, DedupReport> deduplicate(
    const std::vector<LabeledExample>& examples, DedupKey key = DedupKey::SpeciesLength);

// Removes species whose count is below fraction * (total unique examples).
std::pair<std::vector<LabeledExample>, std::vector<std::string>> exclude_rare(
    const std::vector<LabeledExample>& examples, double rarity_fraction);

enum class OversampleRule {
    // k = ceil(1.3 * lower_target / c), capped so k*c <= oversample_cap.
    Scaled,
    // k in {floor(600/c), ceil(600/c)} nearest to 600 subject to k*c >= lower_target.
    NearestTo600,
};

struct BalanceConfig {
    std::size_t lower_target = 400;
    std::size_t upper_bound = 900;
    double rarity_fraction = 0.005;
    OversampleRule rule = OversampleRule::Scaled;
    std::size_t oversample_cap = 936;
    std::uint64_t seed = 0;
};

struct BalanceReport {
    struct SpeciesRow {
        std::size_t before = 0;
        std::size_t after = 0;
        std::size_t replication = 1; // oversampled species only
        bool undersampled = false;
    };
    std::map<std::string, SpeciesRow> per_species;
    nlohmann::json to_json() const;
};

// Oversample below lower_target by whole-set integer replication, undersample
// above upper_bound without replacement. Expects rare species removed.
// Output ordered by (species, original index).
std::pair<std::vector<LabeledExample>, BalanceReport> balance(
    const std::vector<LabeledExample>& examples, const BalanceConfig& config, Rng rng);

std::size_t oversample_factor(std::size_t count, const BalanceConfig& config);

struct ClassWeights {
    std::vector<double> positive;
    std::vector<double> negative;
};

// w+ = N / (2 * max(P, 1)) and w- = N / (2 * max(N - P, 1)), both clamped to
// [0.05, 20] to bound the loss scale.
ClassWeights compute_class_weights(const std::vector<LabeledExample>& examples);

struct SplitSpec {
    enum class Mode { Random, BySpecies };
    Mode mode = Mode::Random;
    double ratio = 0.8;                 // Random: train fraction
    std::vector<std::string> holdout;   // BySpecies: SARS-CoV-2 is always pinned
    std::size_t n_random_holdouts = 3;  // BySpecies: extra species drawn at random
    std::uint64_t seed = 0;
};

inline constexpr const char* kPinnedHoldout = "SARS-CoV-2";

struct SplitReport {
    std::map<std::string, std::size_t> train_per_species;
    std::map<std::string, std::size_t> eval_per_species;
    std::vector<std::string> holdout_species; // BySpecies only
    nlohmann::json to_json() const;
};

struct SplitResult {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> eval;
    SplitReport report;
};

SplitResult split(const std::vector<LabeledExample>& examples, const SplitSpec& spec);

// Per-species counts, descending (the database profile table shape).
std::vector<std::pair<std::string, std::size_t>> profile(
    const std::vector<LabeledExample>& examples);

// Delimited text: accession, sequence, virus name, title, then one binary
// column per label slot.
void write_dataset_csv(std::ostream& out, const std::vector<LabeledExample>& examples,
                       const std::vector<std::string>& label_columns);
struct DatasetFile {
    std::vector<LabeledExample> examples;
    std::vector<std::string> label_columns;
};
DatasetFile read_dataset_csv(std::istream& in);

} // namespace avp
