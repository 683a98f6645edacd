#include "avp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "avp/csv.hpp"
#include "avp/errors.hpp"
#include "avp/models.hpp"

namespace avp {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string_view phase_name(PhaseStatus phase) {
    switch (phase) {
        case PhaseStatus::CellCulture: return "Cell cultures/co-cultures";
        case PhaseStatus::PrimaryCells: return "Primary cells/organoids";
        case PhaseStatus::AnimalModel: return "Animal model";
        case PhaseStatus::PhaseI: return "Phase I";
        case PhaseStatus::PhaseII: return "Phase II";
        case PhaseStatus::PhaseIII: return "Phase III";
        case PhaseStatus::PhaseIV: return "Phase IV";
        case PhaseStatus::Approved: return "Approved";
    }
    fail("bad-config", "invalid phase value");
}

PhaseStatus parse_phase(std::string_view text) {
    const std::string key = lower(trim(text));
    if (key == "cell cultures/co-cultures" || key == "cell culture" || key == "cell cultures")
        return PhaseStatus::CellCulture;
    if (key == "primary cells/organoids" || key == "primary cells/ organoids" ||
        key == "primary cells")
        return PhaseStatus::PrimaryCells;
    if (key == "animal model" || key == "animal models") return PhaseStatus::AnimalModel;
    if (key == "phase i" || key == "phase 1") return PhaseStatus::PhaseI;
    if (key == "phase ii" || key == "phase 2") return PhaseStatus::PhaseII;
    if (key == "phase iii" || key == "phase 3") return PhaseStatus::PhaseIII;
    if (key == "phase iv" || key == "phase 4") return PhaseStatus::PhaseIV;
    if (key == "approved") return PhaseStatus::Approved;
    fail("unknown-phase", "unrecognized trial phase '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// FASTA

std::vector<RawSequence> parse_fasta(std::istream& in, std::string_view source_tag) {
    std::vector<RawSequence> records;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    bool have_record = false;

    auto finish = [&](const RawSequence& rec) {
        if (rec.residues.empty())
            fail("empty-body", "empty body for " + rec.accession);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '>') {
            if (have_record) finish(records.back());
            const std::string header = trim(line.substr(1));
            const std::size_t ws = header.find_first_of(" \t");
            const std::string accession = ws == std::string::npos ? header : header.substr(0, ws);
            if (accession.empty())
                fail("fasta-parse", "missing accession on line " + std::to_string(line_no));
            if (!seen.insert(accession).second)
                fail("duplicate-accession", "accession " + accession + " appears twice");
            records.push_back({accession, "", std::string(source_tag)});
            have_record = true;
        } else {
            if (!have_record)
                fail("fasta-parse", "sequence data before any '>' header on line " +
                                        std::to_string(line_no));
            RawSequence& rec = records.back();
            for (char c : line) {
                if (std::isspace(static_cast<unsigned char>(c))) continue;
                const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                if (!Alphabet::contains(upper))
                    fail("invalid-residue", "invalid residue '" + std::string(1, c) + "' in " +
                                                rec.accession + " at offset " +
                                                std::to_string(rec.residues.size()));
                rec.residues.push_back(upper);
            }
        }
    }
    if (have_record) finish(records.back());
    return records;
}

void write_fasta(std::ostream& out, const std::vector<RawSequence>& records) {
    for (const auto& rec : records) {
        out << '>' << rec.accession << '\n';
        // 70-column wrap, conventional for FASTA
        for (std::size_t i = 0; i < rec.residues.size(); i += 70)
            out << rec.residues.substr(i, 70) << '\n';
    }
}

// ---------------------------------------------------------------------------
// delimited tables

namespace {

std::size_t find_column(const std::vector<std::string>& header, std::string_view name,
                        const char* table) {
    const std::string want = lower(name);
    for (std::size_t i = 0; i < header.size(); ++i)
        if (lower(trim(header[i])) == want) return i;
    fail("missing-column", std::string(table) + " table is missing mandatory column '" +
                               std::string(name) + "'");
}

std::optional<std::size_t> find_column_opt(const std::vector<std::string>& header,
                                           std::string_view name) {
    const std::string want = lower(name);
    for (std::size_t i = 0; i < header.size(); ++i)
        if (lower(trim(header[i])) == want) return i;
    return std::nullopt;
}

void check_arity(const std::vector<std::string>& row, std::size_t expected, std::size_t row_no,
                 const char* table) {
    if (row.size() != expected)
        fail("row-arity", std::string(table) + " row " + std::to_string(row_no) + " has " +
                              std::to_string(row.size()) + " fields, header has " +
                              std::to_string(expected));
}

} // namespace

std::vector<SequenceMetadata> parse_metadata(std::istream& in, char delim) {
    const auto rows = csv::read(in, delim);
    if (rows.empty()) fail("missing-column", "metadata table is empty");
    const auto& header = rows.front();
    const std::size_t acc_col = find_column(header, "Accession", "metadata");
    const std::size_t species_col = find_column(header, "Species", "metadata");
    const auto title_col = find_column_opt(header, "GenBank_Title");
    const auto date_col = find_column_opt(header, "Collection_Date");
    const auto study_col = find_column_opt(header, "BioProject");

    std::vector<SequenceMetadata> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        check_arity(row, header.size(), r + 1, "metadata");
        SequenceMetadata meta;
        meta.accession = trim(row[acc_col]);
        meta.species_raw = trim(row[species_col]);
        if (meta.accession.empty())
            fail("missing-column", "metadata row " + std::to_string(r + 1) + " has empty Accession");
        if (meta.species_raw.empty())
            fail("missing-column", "metadata row " + std::to_string(r + 1) + " has empty Species");
        if (title_col) meta.genbank_title = trim(row[*title_col]);
        if (date_col && !trim(row[*date_col]).empty()) meta.collection_date = trim(row[*date_col]);
        if (study_col && !trim(row[*study_col]).empty()) meta.study_id = trim(row[*study_col]);
        out.push_back(std::move(meta));
    }
    return out;
}

std::vector<DrugVirusEntry> parse_drugvirus(std::istream& in, char delim) {
    const auto rows = csv::read(in, delim);
    if (rows.empty()) fail("missing-column", "drugvirus table is empty");
    const auto& header = rows.front();
    const std::size_t drug_col = find_column(header, "Drug", "drugvirus");
    const std::size_t virus_col = find_column(header, "Virus", "drugvirus");
    const std::size_t phase_col = find_column(header, "Phase", "drugvirus");

    // rows for one (drug, virus) pair fold into a single entry; phase set union
    std::vector<DrugVirusEntry> entries;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        check_arity(row, header.size(), r + 1, "drugvirus");
        const std::string drug = trim(row[drug_col]);
        const std::string virus = trim(row[virus_col]);
        if (drug.empty() || virus.empty())
            fail("missing-column",
                 "drugvirus row " + std::to_string(r + 1) + " has an empty drug or virus name");
        const PhaseStatus phase = parse_phase(row[phase_col]);
        const auto key = std::make_pair(drug, virus);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, entries.size());
            entries.push_back({drug, virus, {phase}});
        } else {
            entries[it->second].phases.insert(phase);
        }
    }
    return entries;
}

// ---------------------------------------------------------------------------
// species normalization

SpeciesAliasTable::SpeciesAliasTable(std::set<std::string> canonical,
                                     std::map<std::string, std::string> aliases)
    : canonical_(std::move(canonical)), aliases_(std::move(aliases)) {
    for (const auto& [raw, target] : aliases_)
        if (canonical_.count(target) == 0)
            fail("bad-config", "alias target '" + target + "' is not a canonical virus name");
}

std::optional<std::string> SpeciesAliasTable::lookup_alias(const std::string& name) const {
    auto it = aliases_.find(name);
    if (it == aliases_.end()) return std::nullopt;
    return it->second;
}

SpeciesAliasTable load_alias_table(std::istream& in, const std::set<std::string>& canonical,
                                   char delim) {
    std::map<std::string, std::string> aliases;
    for (const auto& row : csv::read(in, delim)) {
        if (row.empty() || (row.size() == 1 && trim(row[0]).empty())) continue;
        if (!trim(row[0]).empty() && trim(row[0])[0] == '#') continue;
        if (row.size() != 2)
            fail("row-arity", "alias table rows must be 'raw name,canonical name'");
        aliases[trim(row[0])] = trim(row[1]);
    }
    return SpeciesAliasTable(canonical, std::move(aliases));
}

std::string normalize_species(const std::string& raw, const SpeciesAliasTable& aliases) {
    const std::string name = trim(raw);
    if (aliases.is_canonical(name)) return name;
    if (auto target = aliases.lookup_alias(name)) return *target;
    fail("unmapped-species", "species '" + name + "' maps to no DrugVirus virus");
}

std::set<std::string> virus_names(const std::vector<DrugVirusEntry>& entries) {
    std::set<std::string> names;
    for (const auto& e : entries) names.insert(e.virus);
    return names;
}

// ---------------------------------------------------------------------------
// merge

nlohmann::json MergeReport::to_json() const {
    return {{"matched", matched},
            {"unmatched_sequences", unmatched_sequences},
            {"unmapped_species", unmapped_species},
            {"duplicate_metadata", duplicate_metadata},
            {"unmapped_names", unmapped_names}};
}

std::pair<std::vector<MergedRecord>, MergeReport> merge(
    const std::vector<RawSequence>& sequences, const std::vector<SequenceMetadata>& metadata,
    const SpeciesAliasTable& aliases) {
    MergeReport report;

    std::unordered_map<std::string, const SequenceMetadata*> by_accession;
    by_accession.reserve(metadata.size());
    for (const auto& meta : metadata) {
        auto [it, inserted] = by_accession.emplace(meta.accession, &meta);
        if (!inserted) ++report.duplicate_metadata; // first row wins
    }

    std::set<std::string> unmapped_seen;
    std::vector<MergedRecord> merged;
    merged.reserve(sequences.size());
    // output keeps sequence-file order, so the merge is deterministic
    for (const auto& seq : sequences) {
        auto it = by_accession.find(seq.accession);
        if (it == by_accession.end()) {
            ++report.unmatched_sequences;
            continue;
        }
        const SequenceMetadata& meta = *it->second;
        std::string canonical;
        try {
            canonical = normalize_species(meta.species_raw, aliases);
        } catch (const Error& e) {
            if (e.class_id() != "unmapped-species") throw;
            ++report.unmapped_species;
            if (unmapped_seen.insert(meta.species_raw).second)
                report.unmapped_names.push_back(meta.species_raw);
            continue;
        }
        merged.push_back({seq.accession, seq.residues, canonical, meta.genbank_title});
        ++report.matched;
    }
    return {std::move(merged), std::move(report)};
}

} // namespace avp
