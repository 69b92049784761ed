#pragma once

#include "ebal/balance.hpp"
#include "ebal/core.hpp"
#include "ebal/simulation.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ebal {

/// Parses CSV text: a header row with a `T` column (0/1), a `Y` column
/// (empty cell = missing) and covariates in order. Decimal points only.
ObservationalDataset parse_dataset_csv(const std::string& text);
ObservationalDataset read_dataset_csv(const std::string& path);

/// Formats with 17 significant digits, independent of the locale.
std::string format_double(double x);

/// `unit_id,weight` rows; unit ids are 0-based row numbers of the input.
void write_weights_csv(std::ostream& os, const std::vector<Index>& unit_ids, const Vector& weights);

struct WeightsFile {
    std::vector<Index> unit_ids;
    Vector weights;
};
WeightsFile parse_weights_csv(const std::string& text);

/// replication,estimator,estimate,variance
void write_study_csv(std::ostream& os, const StudyResult& result);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace ebal
