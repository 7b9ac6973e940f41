#include "climfp/pipeline.hpp"

#include <cmath>

#include "climfp/covariance.hpp"

namespace climfp {

const char* time_resolution_name(TimeResolution r) {
    switch (r) {
        case TimeResolution::monthly: return "monthly";
        case TimeResolution::annual: return "annual";
        case TimeResolution::pentad: return "pentad";
    }
    return "unknown";
}

void GriddedSeries::validate() const {
    if (values.rows() != mask.rows() || values.cols() != mask.cols())
        throw Error(errc::invalid_input, "mask and values dimensions differ");
    for (int i = 0; i < values.rows(); ++i)
        for (int j = 0; j < values.cols(); ++j)
            if (mask(i, j) && !std::isfinite(values(i, j)))
                throw Error(errc::invalid_input, "non-finite value marked as present");
}

void PreprocessRules::validate() const {
    if (min_months_per_year < 1 || min_months_per_year > 12)
        throw Error(errc::invalid_input, "min_months_per_year must lie in [1, 12]");
    if (max_missing_annuals_per_pentad < 0 || max_missing_annuals_per_pentad > 4)
        throw Error(errc::invalid_input, "max_missing_annuals_per_pentad must lie in [0, 4]");
    if (control_block_years < 5)
        throw Error(errc::invalid_input, "control blocks must span at least 5 years");
    if (aggregation_factor < 1)
        throw Error(errc::invalid_input, "aggregation factor must be positive");
}

GriddedSeries annual_means(const GriddedSeries& monthly, const PreprocessRules& rules) {
    monthly.validate();
    rules.validate();
    if (monthly.resolution != TimeResolution::monthly)
        throw Error(errc::invalid_input, "annual_means expects a monthly series");

    const int years = monthly.steps() / 12;
    const int boxes = monthly.boxes();
    GriddedSeries out;
    out.resolution = TimeResolution::annual;
    out.values = MatrixXd::Zero(years, boxes);
    out.mask.setConstant(years, boxes, false);

    for (int y = 0; y < years; ++y)
        for (int b = 0; b < boxes; ++b) {
            int present = 0;
            double sum = 0.0;
            for (int m = 0; m < 12; ++m)
                if (monthly.mask(y * 12 + m, b)) {
                    ++present;
                    sum += monthly.values(y * 12 + m, b);
                }
            if (present >= rules.min_months_per_year) {
                out.values(y, b) = sum / present;
                out.mask(y, b) = true;
            }
        }
    return out;
}

GriddedSeries pentad_means(const GriddedSeries& annual, const PreprocessRules& rules) {
    annual.validate();
    rules.validate();
    if (annual.resolution != TimeResolution::annual)
        throw Error(errc::invalid_input, "pentad_means expects an annual series");

    const int pentads = annual.steps() / 5;
    const int boxes = annual.boxes();
    GriddedSeries out;
    out.resolution = TimeResolution::pentad;
    out.values = MatrixXd::Zero(pentads, boxes);
    out.mask.setConstant(pentads, boxes, false);

    for (int w = 0; w < pentads; ++w)
        for (int b = 0; b < boxes; ++b) {
            int present = 0;
            double sum = 0.0;
            for (int k = 0; k < 5; ++k)
                if (annual.mask(w * 5 + k, b)) {
                    ++present;
                    sum += annual.values(w * 5 + k, b);
                }
            if (5 - present <= rules.max_missing_annuals_per_pentad && present > 0) {
                out.values(w, b) = sum / present;
                out.mask(w, b) = true;
            }
        }
    return out;
}

GriddedSeries aggregate_boxes(const GriddedSeries& series, int factor) {
    series.validate();
    if (factor < 1) throw Error(errc::invalid_input, "aggregation factor must be positive");
    if (series.boxes() % factor != 0)
        throw Error(errc::layout_mismatch, "aggregation factor must divide the box count");

    const int steps = series.steps();
    const int groups = series.boxes() / factor;
    GriddedSeries out;
    out.resolution = series.resolution;
    out.values = MatrixXd::Zero(steps, groups);
    out.mask.setConstant(steps, groups, false);

    for (int t = 0; t < steps; ++t)
        for (int g = 0; g < groups; ++g) {
            int present = 0;
            double sum = 0.0;
            for (int k = 0; k < factor; ++k)
                if (series.mask(t, g * factor + k)) {
                    ++present;
                    sum += series.values(t, g * factor + k);
                }
            if (present > 0) {
                out.values(t, g) = sum / present;
                out.mask(t, g) = true;
            }
        }
    return out;
}

GriddedSeries center_reference(const GriddedSeries& series, int start, int end) {
    series.validate();
    if (end < 0) end = series.steps() - 1;
    if (start < 0 || end >= series.steps() || start > end)
        throw Error(errc::invalid_input, "reference period out of range");

    GriddedSeries out = series;
    for (int b = 0; b < series.boxes(); ++b) {
        int present = 0;
        double sum = 0.0;
        for (int t = start; t <= end; ++t)
            if (series.mask(t, b)) {
                ++present;
                sum += series.values(t, b);
            }
        if (present == 0)
            throw Error(errc::invalid_input, "no reference data for a grid-box");
        double ref = sum / present;
        for (int t = 0; t < series.steps(); ++t)
            if (out.mask(t, b)) out.values(t, b) -= ref;
    }
    return out;
}

namespace {

// Per-box OLS detrend in time over the observed entries of a full run.
GriddedSeries detrend(const GriddedSeries& run) {
    GriddedSeries out = run;
    const int steps = run.steps();
    for (int b = 0; b < run.boxes(); ++b) {
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        int m = 0;
        for (int t = 0; t < steps; ++t)
            if (run.mask(t, b)) {
                sx += t;
                sy += run.values(t, b);
                sxx += static_cast<double>(t) * t;
                sxy += t * run.values(t, b);
                ++m;
            }
        if (m < 2) continue;
        double denom = m * sxx - sx * sx;
        double slope = denom != 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
        double intercept = (sy - slope * sx) / m;
        for (int t = 0; t < steps; ++t)
            if (out.mask(t, b)) out.values(t, b) -= intercept + slope * t;
    }
    return out;
}

}  // namespace

SplitControlResult split_control(
    const std::vector<GriddedSeries>& runs, const PreprocessRules& rules,
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    rules.validate();
    const int block = rules.control_block_years;

    std::vector<VectorXd> rows;
    int skipped = 0;
    for (const auto& run : runs) {
        run.validate();
        if (run.resolution != TimeResolution::annual)
            throw Error(errc::invalid_input, "control runs must be annual series");
        if (run.steps() < block) {
            ++skipped;
            continue;
        }
        GriddedSeries flat = detrend(run);
        const int blocks = run.steps() / block;
        for (int k = 0; k < blocks; ++k) {
            GriddedSeries piece;
            piece.resolution = TimeResolution::annual;
            piece.values = flat.values.middleRows(k * block, block);
            piece.mask = flat.mask.middleRows(k * block, block);
            if (mask.size() > 0) {
                if (mask.rows() != block || mask.cols() != run.boxes())
                    throw Error(errc::layout_mismatch, "mask does not match block shape");
                piece.mask = (piece.mask.array() && mask.array()).matrix().eval();
            }
            GriddedSeries pentads = pentad_means(piece, rules);
            // box-major flattening; a missing pentad anywhere drops the block
            VectorXd row(pentads.steps() * pentads.boxes());
            bool complete = true;
            for (int b = 0; b < pentads.boxes() && complete; ++b)
                for (int t = 0; t < pentads.steps(); ++t) {
                    if (!pentads.mask(t, b)) {
                        complete = false;
                        break;
                    }
                    row(b * pentads.steps() + t) = pentads.values(t, b);
                }
            if (complete) rows.push_back(row);
        }
    }

    if (rows.size() < 2)
        throw Error(errc::insufficient_replicates, "fewer than two usable control blocks");

    ControlEnsemble ensemble;
    ensemble.replicates.resize(static_cast<int>(rows.size()), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        ensemble.replicates.row(static_cast<int>(i)) = rows[i].transpose();
    ensemble.centered = false;

    SplitControlResult result;
    result.ensemble = center_ensemble(ensemble);
    result.skipped_runs = skipped;
    return result;
}

}  // namespace climfp
