#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "icalib/error.hpp"

namespace icalib {

/// Concatenated pixel coordinates (u1, v1, ..., ui, vi) of one point seen by i cameras.
using PixelObservation = Eigen::VectorXd;

/// World coordinates in millimetres.
using WorldPoint = Eigen::Vector3d;

/// Paired pixel observations and world points; one row per 3D point.
struct CorrespondenceSet {
  Eigen::MatrixXd observations;  // n x 2i, pixels
  Eigen::MatrixX3d points;       // n x 3, mm
  /// Optional per-row tag (checkerboard position); empty when unused.
  std::vector<int> board_index;

  Eigen::Index size() const { return points.rows(); }
  int camera_count() const { return static_cast<int>(observations.cols() / 2); }
  bool has_board_index() const { return !board_index.empty(); }

  void validate() const {
    if (observations.rows() != points.rows()) {
      throw InvalidArgument("observation and point counts differ (" + std::to_string(observations.rows()) + " vs " +
                            std::to_string(points.rows()) + ")");
    }
    if (observations.cols() < 2 || observations.cols() % 2 != 0) {
      throw InvalidArgument("observation width must be a positive even number, got " +
                            std::to_string(observations.cols()));
    }
    if (has_board_index() && board_index.size() != static_cast<std::size_t>(size())) {
      throw InvalidArgument("board index column has the wrong length");
    }
    for (Eigen::Index r = 0; r < observations.rows(); ++r) {
      if (!observations.row(r).allFinite()) {
        throw PartialVisibility("row " + std::to_string(r) +
                                " is missing pixel coordinates; every camera must observe every point");
      }
    }
    if (!points.allFinite()) throw InvalidArgument("world points contain non-finite entries");
  }

  CorrespondenceSet subset(const std::vector<std::size_t>& rows) const {
    CorrespondenceSet out;
    out.observations.resize(static_cast<Eigen::Index>(rows.size()), observations.cols());
    out.points.resize(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(rows[k]);
      if (r < 0 || r >= size()) throw InvalidArgument("subset row out of range");
      out.observations.row(static_cast<Eigen::Index>(k)) = observations.row(r);
      out.points.row(static_cast<Eigen::Index>(k)) = points.row(r);
      if (has_board_index()) out.board_index.push_back(board_index[rows[k]]);
    }
    return out;
  }

  void append(const PixelObservation& obs, const WorldPoint& p, int board = -1) {
    if (size() > 0 && obs.size() != observations.cols()) throw InvalidArgument("observation width mismatch");
    const Eigen::Index n = size();
    observations.conservativeResize(n + 1, obs.size());
    points.conservativeResize(n + 1, 3);
    observations.row(n) = obs.transpose();
    points.row(n) = p.transpose();
    if (board >= 0) board_index.push_back(board);
  }
};

}  // namespace icalib
