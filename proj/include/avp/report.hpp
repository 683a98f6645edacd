#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "avp/labels.hpp"
#include "avp/models.hpp"
#include "avp/tensor.hpp"

namespace avp {

struct PredictionRow {
    std::string accession;
    std::string species;
    std::string genbank_title;
    // probability-descending, every entry >= the selection threshold
    std::vector<std::pair<std::string, double>> drugs;
};

// Per sequence, the drugs whose probability clears the threshold.
std::vector<PredictionRow> postprocess(const Tensor& probabilities,
                                       const std::vector<LabeledExample>& examples,
                                       const std::vector<std::string>& drug_names,
                                       double threshold);

struct DrugSummary {
    std::string drug;
    std::size_t count = 0;
    double mean_probability = 0.0;
    double ci95_half_width = 0.0; // NaN when count < 2
};

// Count / mean-probability ranking for one species. Rows from several runs
// may be concatenated first; counts then compound across runs. Sorted by
// count descending, ties by mean probability descending. top_k = 0 keeps all.
std::vector<DrugSummary> summarize(const std::vector<PredictionRow>& rows, std::size_t top_k = 0);

struct ActivationDump {
    std::vector<std::pair<std::string, Tensor>> stages; // forward order
};

// Eval-mode forward of a single sequence, every labelled stage captured.
ActivationDump dump_activations(Model& model, std::string_view residues);

void write_prediction_rows(std::ostream& out, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_prediction_rows(std::istream& in);
void write_summaries(std::ostream& out, const std::vector<DrugSummary>& summaries);

} // namespace avp
