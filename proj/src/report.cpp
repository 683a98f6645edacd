#include "avp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>

#include "avp/csv.hpp"
#include "avp/errors.hpp"
#include "avp/train.hpp"

namespace avp {

std::vector<PredictionRow> postprocess(const Tensor& probabilities,
                                       const std::vector<LabeledExample>& examples,
                                       const std::vector<std::string>& drug_names,
                                       double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        fail("bad-config", "selection threshold must be in (0, 1)");
    if (probabilities.rank() != 2 || probabilities.dim(0) != examples.size() ||
        probabilities.dim(1) != drug_names.size())
        fail("shape-mismatch", "probability matrix " + shape_to_string(probabilities.shape()) +
                                   " does not match " + std::to_string(examples.size()) +
                                   " examples x " + std::to_string(drug_names.size()) + " drugs");

    std::vector<PredictionRow> rows;
    rows.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        PredictionRow row;
        row.accession = examples[i].accession;
        row.species = examples[i].species;
        row.genbank_title = examples[i].genbank_title;
        for (std::size_t d = 0; d < drug_names.size(); ++d) {
            const double p = probabilities.at(i, d);
            if (p >= threshold) row.drugs.emplace_back(drug_names[d], p);
        }
        std::stable_sort(row.drugs.begin(), row.drugs.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        rows.push_back(std::move(row)); // rows below threshold still appear, with no drugs
    }
    return rows;
}

std::vector<DrugSummary> summarize(const std::vector<PredictionRow>& rows, std::size_t top_k) {
    if (rows.empty()) fail("empty-dataset", "summarize needs at least one prediction row");
    const std::string& species = rows.front().species;
    for (const auto& row : rows)
        if (row.species != species)
            fail("bad-config", "summarize expects rows of a single species, found '" +
                                   row.species + "' next to '" + species + "'");

    // probabilities gathered in row order per drug
    std::map<std::string, std::vector<double>> per_drug;
    for (const auto& row : rows)
        for (const auto& [drug, p] : row.drugs) per_drug[drug].push_back(p);

    std::vector<DrugSummary> out;
    out.reserve(per_drug.size());
    for (const auto& [drug, probs] : per_drug) {
        DrugSummary s;
        s.drug = drug;
        s.count = probs.size();
        const AggregateStat stat = mean_ci95(probs);
        s.mean_probability = stat.mean;
        s.ci95_half_width = stat.half_width;
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const DrugSummary& a, const DrugSummary& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.mean_probability != b.mean_probability) return a.mean_probability > b.mean_probability;
        return a.drug < b.drug;
    });
    if (top_k > 0 && out.size() > top_k) out.resize(top_k);
    return out;
}

ActivationDump dump_activations(Model& model, std::string_view residues) {
    const EncodedBatch batch = model.encode({residues});
    Tape tape;
    model.forward(tape, batch);
    ActivationDump dump;
    for (NodeId id = 0; id < tape.node_count(); ++id)
        if (!tape.label(id).empty()) dump.stages.emplace_back(tape.label(id), tape.value(id));
    return dump;
}

namespace {

std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", p);
    return buf;
}

std::vector<std::string> split_list(const std::string& joined) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= joined.size()) {
        std::size_t comma = joined.find(',', start);
        if (comma == std::string::npos) comma = joined.size();
        std::string part = joined.substr(start, comma - start);
        const std::size_t b = part.find_first_not_of(' ');
        const std::size_t e = part.find_last_not_of(' ');
        if (b != std::string::npos) parts.push_back(part.substr(b, e - b + 1));
        start = comma + 1;
    }
    return parts;
}

} // namespace

void write_prediction_rows(std::ostream& out, const std::vector<PredictionRow>& rows) {
    out << csv::format_row({"accession", "virus_name", "genbank_title", "antivirals",
                            "probabilities"})
        << '\n';
    for (const auto& row : rows) {
        std::string drugs, probs;
        for (std::size_t i = 0; i < row.drugs.size(); ++i) {
            if (i) {
                drugs += ", ";
                probs += ", ";
            }
            drugs += row.drugs[i].first;
            probs += format_probability(row.drugs[i].second);
        }
        out << csv::format_row({row.accession, row.species, row.genbank_title, drugs, probs})
            << '\n';
    }
}

std::vector<PredictionRow> read_prediction_rows(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty()) fail("bad-artifact", "prediction file is empty");
    if (rows.front().size() != 5 || rows.front()[0] != "accession")
        fail("bad-artifact", "prediction file has an unexpected header");

    std::vector<PredictionRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 5)
            fail("row-arity", "prediction row " + std::to_string(r + 1) + " has " +
                                  std::to_string(row.size()) + " fields");
        PredictionRow pr;
        pr.accession = row[0];
        pr.species = row[1];
        pr.genbank_title = row[2];
        const auto drugs = split_list(row[3]);
        const auto probs = split_list(row[4]);
        if (drugs.size() != probs.size())
            fail("bad-artifact", "prediction row " + std::to_string(r + 1) +
                                     " has mismatched drug and probability lists");
        for (std::size_t i = 0; i < drugs.size(); ++i)
            pr.drugs.emplace_back(drugs[i], std::stod(probs[i]));
        out.push_back(std::move(pr));
    }
    return out;
}

void write_summaries(std::ostream& out, const std::vector<DrugSummary>& summaries) {
    out << csv::format_row({"antiviral", "count", "mean_probability", "ci95_half_width"}) << '\n';
    for (const auto& s : summaries) {
        const std::string hw =
            std::isnan(s.ci95_half_width) ? "n/a" : format_probability(s.ci95_half_width);
        out << csv::format_row({s.drug, std::to_string(s.count),
                                format_probability(s.mean_probability), hw})
            << '\n';
    }
}

} // namespace avp
