//! Hyperbolic geometry in the hyperboloid model.
//!
//! Points live on the upper sheet of `<x,x>_M = -1` in Minkowski space
//! `R^{1,d}`; the Poincaré ball is used for input and output only.

mod geodesic;
mod isometry;
mod net;
mod point;
mod triangle;
mod volume;

pub use geodesic::{
    dist_geodesics, dist_geodesics_numeric, geodesics_within, dist_point_geodesic, Geodesic, LinePairDistance,
    LineRecord, PointLineDistance,
};
pub use isometry::{boost_ideal, Isometry};
pub use net::{
    balls_hit_by_line, greedy_net, greedy_net_shell, shell_ball_centers, shell_ball_centers_with,
    Net, NetConfig,
};
pub use point::{acosh1p, dist, dist_ball, mdot, Point, HYPERBOLOID_TOL};
pub use triangle::{cosh_rule_side, Triangle};
pub use volume::{
    ball_volume, cap_area, random_direction, sample_point_in_ball, sample_point_in_shell,
    sample_volume_radius, shell_volume, sphere_area,
};
