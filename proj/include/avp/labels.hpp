#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avp/corpus.hpp"

namespace avp {

// Ordered drug list; indices are stable for a run and persisted with every
// artifact that encodes label vectors.
class DrugRegistry {
public:
    DrugRegistry() = default;
    explicit DrugRegistry(std::vector<std::string> names);

    // Lexicographically sorted union of entry drug names, so the registry is
    // independent of entry order. Rejects more drugs than `max_size`.
    static DrugRegistry from_entries(const std::vector<DrugVirusEntry>& entries,
                                     std::size_t max_size = 126);

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t index) const { return names_[index]; }
    std::size_t index_of(const std::string& drug) const; // throws on unknown drug

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
};

enum class LabelVersion { V1, V2, V3 };

std::string_view label_version_name(LabelVersion v);
LabelVersion parse_label_version(std::string_view text);

// virus -> binary label vector. V1/V3 vectors have one slot per drug; V2 has
// drug-major, phase-minor layout (slot = drug_index * 8 + phase_index).
class LabelDictionary {
public:
    LabelDictionary(LabelVersion version, DrugRegistry registry);

    LabelVersion version() const { return version_; }
    const DrugRegistry& registry() const { return registry_; }
    std::size_t label_dim() const;

    bool contains(const std::string& virus) const { return vectors_.count(virus) > 0; }
    const std::vector<std::uint8_t>& vector_for(const std::string& virus) const;
    std::shared_ptr<const std::vector<std::uint8_t>> shared_vector(const std::string& virus) const;
    const std::map<std::string, std::shared_ptr<std::vector<std::uint8_t>>>& all() const {
        return vectors_;
    }

    void set(const std::string& virus, std::vector<std::uint8_t> vec);

private:
    LabelVersion version_;
    DrugRegistry registry_;
    std::map<std::string, std::shared_ptr<std::vector<std::uint8_t>>> vectors_;
};

LabelDictionary build_label_dictionary(const std::vector<DrugVirusEntry>& entries,
                                       LabelVersion version, std::size_t max_drugs = 126);

struct LabeledExample {
    std::string accession;
    std::string residues;
    std::string species;
    std::string genbank_title;
    std::shared_ptr<const std::vector<std::uint8_t>> labels;
};

struct AttachReport {
    std::vector<std::string> all_zero_species; // legal, but worth surfacing
};

std::pair<std::vector<LabeledExample>, AttachReport> attach_labels(
    const std::vector<MergedRecord>& records, const LabelDictionary& dict);

// Virus x drug pivot grid with a version tag comment line.
void write_label_dictionary(std::ostream& out, const LabelDictionary& dict);

} // namespace avp
