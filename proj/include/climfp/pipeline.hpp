#pragma once

#include <string>
#include <vector>

#include "climfp/types.hpp"

namespace climfp {

enum class TimeResolution { monthly, annual, pentad };

const char* time_resolution_name(TimeResolution r);

// time x gridbox values with an explicit missingness mask.
struct GriddedSeries {
    MatrixXd values;                 // time x boxes; entries under !mask are ignored
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = present
    TimeResolution resolution = TimeResolution::monthly;

    int steps() const { return static_cast<int>(values.rows()); }
    int boxes() const { return static_cast<int>(values.cols()); }

    void validate() const;
};

struct PreprocessRules {
    int min_months_per_year = 9;
    int max_missing_annuals_per_pentad = 2;
    int control_block_years = 60;
    // reference period, inclusive annual indices; negative end = full range
    int reference_start = 0;
    int reference_end = -1;
    int aggregation_factor = 1;

    void validate() const;
};

// Yearly mean per box when at least min_months_per_year months are present.
GriddedSeries annual_means(const GriddedSeries& monthly, const PreprocessRules& rules);

// 5-year mean per box when at most max_missing_annuals_per_pentad annuals
// are missing in the window.
GriddedSeries pentad_means(const GriddedSeries& annual, const PreprocessRules& rules);

// Unweighted mean of available sub-boxes over consecutive groups of `factor`
// columns; all-missing groups stay missing.
GriddedSeries aggregate_boxes(const GriddedSeries& series, int factor);

// Subtract the per-box mean over [start, end] annual steps.
GriddedSeries center_reference(const GriddedSeries& series, int start, int end);

struct SplitControlResult {
    ControlEnsemble ensemble;
    int skipped_runs = 0;  // runs shorter than one block
};

// Detrend each control run per box (OLS in time over the full run), cut
// non-overlapping blocks of control_block_years annual steps, apply the
// missingness mask, reduce each block through pentad_means, and stack the
// flattened (box-major) block vectors as ensemble rows, then center.
SplitControlResult split_control(const std::vector<GriddedSeries>& runs,
                                 const PreprocessRules& rules,
                                 const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);

}  // namespace climfp
