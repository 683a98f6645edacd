#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace avp {

struct RawSequence {
    std::string accession;
    std::string residues;
    std::string source_tag;
};

struct SequenceMetadata {
    std::string accession;
    std::string species_raw;
    std::string genbank_title;
    std::optional<std::string> collection_date;
    std::optional<std::string> study_id;
};

// Ordered trial-evidence levels, weakest to strongest.
enum class PhaseStatus {
    CellCulture,
    PrimaryCells,
    AnimalModel,
    PhaseI,
    PhaseII,
    PhaseIII,
    PhaseIV,
    Approved,
};
constexpr std::size_t kPhaseCount = 8;

std::string_view phase_name(PhaseStatus phase);
PhaseStatus parse_phase(std::string_view text); // throws Error("unknown-phase")

struct DrugVirusEntry {
    std::string drug;
    std::string virus;
    std::set<PhaseStatus> phases;
};

// raw species name -> canonical DrugVirus virus name. Exact canonical names
// pass through; alias targets must themselves be canonical.
class SpeciesAliasTable {
public:
    SpeciesAliasTable(std::set<std::string> canonical, std::map<std::string, std::string> aliases);

    const std::set<std::string>& canonical() const { return canonical_; }
    bool is_canonical(const std::string& name) const { return canonical_.count(name) > 0; }
    std::optional<std::string> lookup_alias(const std::string& name) const;

private:
    std::set<std::string> canonical_;
    std::map<std::string, std::string> aliases_;
};

struct MergedRecord {
    std::string accession;
    std::string residues;
    std::string species; // canonical
    std::string genbank_title;
};

struct MergeReport {
    std::size_t matched = 0;
    std::size_t unmatched_sequences = 0; // accession absent from metadata
    std::size_t unmapped_species = 0;    // species name not mappable to the DrugVirus list
    std::size_t duplicate_metadata = 0;  // extra metadata rows for one accession (first wins)
    std::vector<std::string> unmapped_names;

    nlohmann::json to_json() const;
};

std::vector<RawSequence> parse_fasta(std::istream& in, std::string_view source_tag = "main");
void write_fasta(std::ostream& out, const std::vector<RawSequence>& records);

std::vector<SequenceMetadata> parse_metadata(std::istream& in, char delim = ',');
std::vector<DrugVirusEntry> parse_drugvirus(std::istream& in, char delim = ',');

// Two-column delimited text: raw name, canonical name. Validates targets
// against the canonical virus list.
SpeciesAliasTable load_alias_table(std::istream& in, const std::set<std::string>& canonical,
                                   char delim = ',');

// Exact-match pass first, then alias lookup; throws Error("unmapped-species").
std::string normalize_species(const std::string& raw, const SpeciesAliasTable& aliases);

std::set<std::string> virus_names(const std::vector<DrugVirusEntry>& entries);

// Inner join on accession, species normalized; records that cannot be mapped
// into the DrugVirus virus list are dropped and tallied, never fatal.
std::pair<std::vector<MergedRecord>, MergeReport> merge(const std::vector<RawSequence>& sequences,
                                                        const std::vector<SequenceMetadata>& metadata,
                                                        const SpeciesAliasTable& aliases);

} // namespace avp
