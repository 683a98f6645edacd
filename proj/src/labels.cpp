#include "avp/labels.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "avp/csv.hpp"
#include "avp/errors.hpp"

namespace avp {

DrugRegistry::DrugRegistry(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) fail("bad-config", "registry drug name must not be empty");
        if (!index_.emplace(names_[i], i).second)
            fail("bad-config", "duplicate drug name '" + names_[i] + "' in registry");
    }
}

DrugRegistry DrugRegistry::from_entries(const std::vector<DrugVirusEntry>& entries,
                                        std::size_t max_size) {
    std::set<std::string> names;
    for (const auto& e : entries) names.insert(e.drug);
    if (names.size() > max_size)
        fail("registry-overflow", "drug table has " + std::to_string(names.size()) +
                                      " distinct drugs, registry holds at most " +
                                      std::to_string(max_size));
    return DrugRegistry(std::vector<std::string>(names.begin(), names.end()));
}

std::size_t DrugRegistry::index_of(const std::string& drug) const {
    auto it = index_.find(drug);
    if (it == index_.end()) fail("bad-config", "drug '" + drug + "' is not in the registry");
    return it->second;
}

std::string_view label_version_name(LabelVersion v) {
    switch (v) {
        case LabelVersion::V1: return "V1";
        case LabelVersion::V2: return "V2";
        case LabelVersion::V3: return "V3";
    }
    fail("bad-config", "invalid label version");
}

LabelVersion parse_label_version(std::string_view text) {
    if (text == "V1" || text == "v1" || text == "1") return LabelVersion::V1;
    if (text == "V2" || text == "v2" || text == "2") return LabelVersion::V2;
    if (text == "V3" || text == "v3" || text == "3") return LabelVersion::V3;
    fail("bad-config", "unknown label version '" + std::string(text) + "'");
}

LabelDictionary::LabelDictionary(LabelVersion version, DrugRegistry registry)
    : version_(version), registry_(std::move(registry)) {}

std::size_t LabelDictionary::label_dim() const {
    return version_ == LabelVersion::V2 ? registry_.size() * kPhaseCount : registry_.size();
}

const std::vector<std::uint8_t>& LabelDictionary::vector_for(const std::string& virus) const {
    auto it = vectors_.find(virus);
    if (it == vectors_.end())
        fail("missing-species-label", "virus '" + virus + "' is absent from the label dictionary");
    return *it->second;
}

std::shared_ptr<const std::vector<std::uint8_t>> LabelDictionary::shared_vector(
    const std::string& virus) const {
    auto it = vectors_.find(virus);
    if (it == vectors_.end())
        fail("missing-species-label", "virus '" + virus + "' is absent from the label dictionary");
    return it->second;
}

void LabelDictionary::set(const std::string& virus, std::vector<std::uint8_t> vec) {
    if (vec.size() != label_dim())
        fail("shape-mismatch", "label vector for " + virus + " has " + std::to_string(vec.size()) +
                                   " slots, dictionary encodes " + std::to_string(label_dim()));
    vectors_[virus] = std::make_shared<std::vector<std::uint8_t>>(std::move(vec));
}

LabelDictionary build_label_dictionary(const std::vector<DrugVirusEntry>& entries,
                                       LabelVersion version, std::size_t max_drugs) {
    DrugRegistry registry = DrugRegistry::from_entries(entries, max_drugs);
    LabelDictionary dict(version, registry);

    // virus -> drug index -> strongest observed phase
    std::map<std::string, std::map<std::size_t, PhaseStatus>> strongest;
    for (const auto& e : entries) {
        if (e.phases.empty())
            fail("bad-config", "entry (" + e.drug + ", " + e.virus + ") has no phases");
        const PhaseStatus top = *e.phases.rbegin();
        auto& per_virus = strongest[e.virus];
        const std::size_t d = registry.index_of(e.drug);
        auto it = per_virus.find(d);
        if (it == per_virus.end() || it->second < top) per_virus[d] = top;
    }

    for (const auto& [virus, drugs] : strongest) {
        std::vector<std::uint8_t> vec(dict.label_dim(), 0);
        for (const auto& [d, top] : drugs) {
            switch (version) {
                case LabelVersion::V1:
                    vec[d] = 1; // any interaction counts
                    break;
                case LabelVersion::V2:
                    // hierarchy assumption: a reached phase implies the lower ones
                    for (std::size_t p = 0; p <= static_cast<std::size_t>(top); ++p)
                        vec[d * kPhaseCount + p] = 1;
                    break;
                case LabelVersion::V3:
                    if (top >= PhaseStatus::PhaseII) vec[d] = 1;
                    break;
            }
        }
        dict.set(virus, std::move(vec));
    }
    return dict;
}

std::pair<std::vector<LabeledExample>, AttachReport> attach_labels(
    const std::vector<MergedRecord>& records, const LabelDictionary& dict) {
    std::vector<LabeledExample> out;
    out.reserve(records.size());
    std::set<std::string> zero_species;
    for (const auto& rec : records) {
        auto labels = dict.shared_vector(rec.species);
        if (std::all_of(labels->begin(), labels->end(), [](std::uint8_t b) { return b == 0; }))
            zero_species.insert(rec.species);
        out.push_back({rec.accession, rec.residues, rec.species, rec.genbank_title, labels});
    }
    AttachReport report;
    report.all_zero_species.assign(zero_species.begin(), zero_species.end());
    return {std::move(out), std::move(report)};
}

void write_label_dictionary(std::ostream& out, const LabelDictionary& dict) {
    out << "# label_version=" << label_version_name(dict.version()) << '\n';
    std::vector<std::string> header{"virus"};
    if (dict.version() == LabelVersion::V2) {
        for (const auto& drug : dict.registry().names())
            for (std::size_t p = 0; p < kPhaseCount; ++p)
                header.push_back(drug + "|" + std::string(phase_name(static_cast<PhaseStatus>(p))));
    } else {
        for (const auto& drug : dict.registry().names()) header.push_back(drug);
    }
    out << csv::format_row(header) << '\n';
    for (const auto& [virus, vec] : dict.all()) {
        std::vector<std::string> row{virus};
        for (std::uint8_t bit : *vec) row.push_back(bit ? "1" : "0");
        out << csv::format_row(row) << '\n';
    }
}

} // namespace avp
