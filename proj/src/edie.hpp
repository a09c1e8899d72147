#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trajectory.hpp"

namespace avtse {

// A vertex in the time-space plane.
struct TsPoint {
  double t;
  double x;
};

using Polygon = std::vector<TsPoint>;

struct Rect {
  double t0, t1, x0, x1;
  double area() const { return (t1 - t0) * (x1 - x0); }
};

double polygon_area(std::span<const TsPoint> poly);

// Sutherland-Hodgman clip of `poly` against an axis-aligned rectangle.
Polygon clip_to_rect(std::span<const TsPoint> poly, const Rect& r);

// Region between a vehicle's trajectory and trajectory + headway on one lane,
// stored as one convex quadrilateral per sample interval.
struct HeadwayBand {
  std::string vehicle_id;
  int lane = 0;
  std::vector<Polygon> strips;

  static HeadwayBand from_polygon(Polygon poly, int lane = 0);
};

// Bands of one track, one per contiguous stay on a lane. Intervals touching a
// point without a finite headway are skipped.
std::vector<HeadwayBand> headway_bands(const VehicleTrack& track);

double clip_band_to_cell(const HeadwayBand& band, const Rect& cell);

enum class Quantity { Density, Speed, Flow };
const char* quantity_name(Quantity q);

// Per-lane n_S x n_H matrix; rows are road segments, columns time intervals.
struct CellField {
  int lane = 0;
  Quantity quantity = Quantity::Density;
  Eigen::MatrixXd values;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = defined

  CellField() = default;
  CellField(int lane, Quantity q, int n_s, int n_h)
      : lane(lane), quantity(q), values(Eigen::MatrixXd::Zero(n_s, n_h)), mask(n_s, n_h) {
    mask.setConstant(false);
  }
  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  bool defined(int s, int h) const { return mask(s, h); }
  void set(int s, int h, double v) {
    values(s, h) = v;
    mask(s, h) = true;
  }
  void clear(int s, int h) {
    values(s, h) = 0.0;
    mask(s, h) = false;
  }
  std::size_t defined_count() const { return static_cast<std::size_t>(mask.count()); }
};

struct CellContribution {
  std::string vehicle_id;
  int lane = 0;
  int h = 0;
  int s = 0;
  double d = 0.0;  // m travelled inside the cell
  double t = 0.0;  // s spent inside the cell
  double a = 0.0;  // m*s of headway band inside the cell
};

// Edie sums over a set of vehicles, per lane.
struct CellSums {
  Grid grid;
  std::vector<Eigen::MatrixXd> d, t, a;

  explicit CellSums(const Grid& g);
  void add(int lane_idx, int h, int s, double dd, double tt, double aa) {
    d[lane_idx](s, h) += dd;
    t[lane_idx](s, h) += tt;
    a[lane_idx](s, h) += aa;
  }
  void merge(const CellSums& other);
};

// Walks one track and reports (lane_idx, h, s, d, t, a) pieces to `sink`.
// Lane changes between samples are split at the midpoint of the interval.
void accumulate_track(const VehicleTrack& track, const Grid& grid,
                      const std::function<void(int, int, int, double, double, double)>& sink);

void accumulate_track(const VehicleTrack& track, CellSums& sums);

// Aggregated per (vehicle, lane, h, s). Empty `vehicles` means every track.
std::vector<CellContribution> cell_contributions(const TrackSet& ts, std::span<const std::string> vehicles = {});

struct LaneStates {
  int lane = 0;
  CellField density;  // veh/m
  CellField speed;    // m/s
  CellField flow;     // veh/s
};

// k = sum t / sum a, v = sum d / sum t, q = sum d / sum a; cells where either
// denominator vanishes stay masked.
std::vector<LaneStates> states_from_sums(const CellSums& sums);

std::vector<LaneStates> ground_truth(const TrackSet& ts);

}  // namespace avtse
