#include <sstream>

#include "doctest.h"

#include "avp/corpus.hpp"
#include "avp/errors.hpp"

using namespace avp;

namespace {

std::vector<RawSequence> fasta_from(const std::string& text) {
    std::istringstream in(text);
    return parse_fasta(in);
}

SpeciesAliasTable test_aliases() {
    return SpeciesAliasTable(
        {"SARS-CoV-2", "Zika virus", "MERS coronavirus", "Hepatitis C virus"},
        {{"Severe acute respiratory syndrome coronavirus 2", "SARS-CoV-2"},
         {"Middle East respiratory syndrome-related coronavirus", "MERS coronavirus"}});
}

} // namespace

TEST_CASE("parse_fasta concatenates split bodies and preserves order") {
    const auto records = fasta_from(">A1 x\nMKF\n>A2 y\nGG\nG\n");
    REQUIRE(records.size() == 2);
    CHECK(records[0].accession == "A1");
    CHECK(records[0].residues == "MKF");
    CHECK(records[1].accession == "A2");
    CHECK(records[1].residues == "GGG");
}

TEST_CASE("parse_fasta rejects residues outside the alphabet, naming the record") {
    try {
        fasta_from(">A1\nMKF1\n");
        FAIL("expected invalid-residue");
    } catch (const Error& e) {
        CHECK(e.class_id() == "invalid-residue");
        CHECK(e.message().find("A1") != std::string::npos);
        CHECK(e.message().find("offset 3") != std::string::npos);
    }
}

TEST_CASE("parse_fasta rejects a header with an empty body") {
    CHECK_THROWS_WITH_AS(fasta_from(">A1\n>A2\nMK\n"), doctest::Contains("A1"), Error);
}

TEST_CASE("parse_fasta rejects duplicate accessions within one file") {
    CHECK_THROWS_WITH_AS(fasta_from(">A1\nMK\n>A1\nGG\n"),
                         doctest::Contains("duplicate-accession"), Error);
}

TEST_CASE("parse_fasta upper-cases lower-case residues") {
    const auto records = fasta_from(">A1\nmkf\n");
    CHECK(records[0].residues == "MKF");
}

TEST_CASE("fasta round-trips through write and re-parse") {
    const std::string text = ">A1\nMKFLVFLGIITTVAA\n>A2 some title\nGG\nGSTT\n";
    const auto first = fasta_from(text);
    std::ostringstream out;
    write_fasta(out, first);
    const auto second = fasta_from(out.str());
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].accession == second[i].accession);
        CHECK(first[i].residues == second[i].residues);
    }
}

TEST_CASE("parse_metadata reads mandatory columns and ignores unknown ones") {
    std::istringstream in("Accession,Species,Geo_Location\nA1,Zika virus,Brazil\n");
    const auto rows = parse_metadata(in);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].accession == "A1");
    CHECK(rows[0].species_raw == "Zika virus");
}

TEST_CASE("parse_metadata names the row with an empty species") {
    std::istringstream in("Accession,Species\nA1,Zika virus\nA2,\n");
    CHECK_THROWS_WITH_AS(parse_metadata(in), doctest::Contains("row 3"), Error);
}

TEST_CASE("parse_metadata requires the mandatory columns") {
    std::istringstream in("Accession,Geo_Location\nA1,Brazil\n");
    CHECK_THROWS_WITH_AS(parse_metadata(in), doctest::Contains("Species"), Error);
}

TEST_CASE("parse_metadata rejects row arity mismatches") {
    std::istringstream in("Accession,Species\nA1,Zika virus,extra\n");
    CHECK_THROWS_WITH_AS(parse_metadata(in), doctest::Contains("row-arity"), Error);
}

TEST_CASE("parse_drugvirus folds repeated pairs into one phase set") {
    std::istringstream in(
        "Drug,Virus,Phase\n"
        "lopinavir,MERS coronavirus,Phase III\n"
        "drugX,virusY,Cell cultures/co-cultures\n"
        "drugX,virusY,Phase II\n");
    const auto entries = parse_drugvirus(in);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].drug == "lopinavir");
    CHECK(entries[0].phases == std::set<PhaseStatus>{PhaseStatus::PhaseIII});
    CHECK(entries[1].phases ==
          std::set<PhaseStatus>{PhaseStatus::CellCulture, PhaseStatus::PhaseII});
}

TEST_CASE("parse_drugvirus rejects unknown phase labels") {
    std::istringstream in("Drug,Virus,Phase\nlopinavir,MERS coronavirus,Phase V\n");
    CHECK_THROWS_WITH_AS(parse_drugvirus(in), doctest::Contains("unknown-phase"), Error);
}

TEST_CASE("parse_drugvirus rejects empty drug or virus names") {
    std::istringstream in("Drug,Virus,Phase\n,MERS coronavirus,Phase III\n");
    CHECK_THROWS_AS(parse_drugvirus(in), Error);
}

TEST_CASE("phase order follows the trial hierarchy") {
    CHECK(PhaseStatus::CellCulture < PhaseStatus::PrimaryCells);
    CHECK(PhaseStatus::PrimaryCells < PhaseStatus::AnimalModel);
    CHECK(PhaseStatus::AnimalModel < PhaseStatus::PhaseI);
    CHECK(PhaseStatus::PhaseI < PhaseStatus::PhaseII);
    CHECK(PhaseStatus::PhaseII < PhaseStatus::PhaseIII);
    CHECK(PhaseStatus::PhaseIII < PhaseStatus::PhaseIV);
    CHECK(PhaseStatus::PhaseIV < PhaseStatus::Approved);
}

TEST_CASE("normalize_species resolves aliases and passes canonical names through") {
    const SpeciesAliasTable aliases = test_aliases();
    CHECK(normalize_species("Severe acute respiratory syndrome coronavirus 2", aliases) ==
          "SARS-CoV-2");
    CHECK(normalize_species("Zika virus", aliases) == "Zika virus");
    CHECK_THROWS_WITH_AS(normalize_species("Tobacco mosaic virus", aliases),
                         doctest::Contains("unmapped-species"), Error);
}

TEST_CASE("normalize_species is idempotent") {
    const SpeciesAliasTable aliases = test_aliases();
    const std::string once =
        normalize_species("Middle East respiratory syndrome-related coronavirus", aliases);
    CHECK(normalize_species(once, aliases) == once);
}

TEST_CASE("alias targets must be canonical names") {
    std::istringstream in("Some raw name,Unknown virus\n");
    CHECK_THROWS_AS(load_alias_table(in, {"Zika virus"}), Error);
}

TEST_CASE("merge inner-joins on accession and reports misses") {
    const auto sequences = fasta_from(">A1\nMKF\n>A2\nGGG\n>A3\nTTT\n");
    std::istringstream meta_in(
        "Accession,Species,GenBank_Title\n"
        "A1,Zika virus,polyprotein\n"
        "A3,Severe acute respiratory syndrome coronavirus 2,orf1ab\n");
    const auto metadata = parse_metadata(meta_in);
    const auto [merged, report] = merge(sequences, metadata, test_aliases());

    REQUIRE(merged.size() == 2);
    CHECK(merged[0].accession == "A1");
    CHECK(merged[0].species == "Zika virus");
    CHECK(merged[1].species == "SARS-CoV-2");
    CHECK(merged[1].genbank_title == "orf1ab");
    CHECK(report.matched == 2);
    CHECK(report.unmatched_sequences == 1);
}

TEST_CASE("merge drops species outside the DrugVirus list and tallies them") {
    const auto sequences = fasta_from(">A1\nMKF\n");
    std::istringstream meta_in("Accession,Species\nA1,Influenza A\n");
    const auto metadata = parse_metadata(meta_in);
    const auto [merged, report] = merge(sequences, metadata, test_aliases());
    CHECK(merged.empty());
    CHECK(report.unmapped_species == 1);
    REQUIRE(report.unmapped_names.size() == 1);
    CHECK(report.unmapped_names[0] == "Influenza A");
}

TEST_CASE("merge with empty intersection yields empty output, non-empty report") {
    const auto sequences = fasta_from(">A1\nMKF\n");
    std::istringstream meta_in("Accession,Species\nB9,Zika virus\n");
    const auto metadata = parse_metadata(meta_in);
    const auto [merged, report] = merge(sequences, metadata, test_aliases());
    CHECK(merged.empty());
    CHECK(report.unmatched_sequences == 1);
    CHECK(report.to_json()["unmatched_sequences"] == 1);
}

TEST_CASE("merge output is bounded by both inputs and keeps first metadata row on duplicates") {
    const auto sequences = fasta_from(">A1\nMKF\n>A2\nGG\n");
    std::istringstream meta_in(
        "Accession,Species,GenBank_Title\n"
        "A1,Zika virus,first\n"
        "A1,Zika virus,second\n"
        "A2,Zika virus,other\n");
    const auto metadata = parse_metadata(meta_in);
    const auto [merged, report] = merge(sequences, metadata, test_aliases());
    CHECK(merged.size() <= std::min<std::size_t>(sequences.size(), metadata.size()));
    CHECK(report.duplicate_metadata == 1);
    CHECK(merged[0].genbank_title == "first");
}
