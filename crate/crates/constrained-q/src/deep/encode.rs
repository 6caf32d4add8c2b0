//! Turning observations into network inputs.

use crate::env::highway::HighwayState;

/// Features per neighbor row fed to the set encoder.
pub const NEIGHBOR_FEATURES: usize = 3;
/// Ego features appended after pooling.
pub const EGO_FEATURES: usize = 2;
/// Speed differences are divided by this before entering the network.
pub const SPEED_SCALE: f64 = 10.0;

/// Encoded observation, owned. Borrow it as a [`NetInput`] to run the net.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    /// Variable-size set of neighbor feature rows plus fixed ego features.
    Set { neighbors: Vec<f64>, ego: Vec<f64> },
    /// Plain dense vector.
    Flat(Vec<f64>),
}

/// Borrowed view of an encoded observation.
#[derive(Debug, Clone, Copy)]
pub enum NetInput<'a> {
    Set { neighbors: &'a [f64], ego: &'a [f64] },
    Flat(&'a [f64]),
}

impl Encoded {
    pub fn as_input(&self) -> NetInput<'_> {
        match self {
            Encoded::Set { neighbors, ego } => {
                NetInput::Set { neighbors: neighbors.as_slice(), ego: ego.as_slice() }
            }
            Encoded::Flat(x) => NetInput::Flat(x.as_slice()),
        }
    }
}

pub trait Encode<S> {
    fn encode(&self, state: &S) -> Encoded;
}

/// Ego-centric highway features. Each visible neighbor becomes
/// `[dx / sensor_range, (v - ego_v) / SPEED_SCALE, lane - ego_lane]`; the ego
/// itself contributes `[(ego_v - ego_v_des) / SPEED_SCALE, ego_lane - 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighwayEncoder;

impl Encode<HighwayState> for HighwayEncoder {
    fn encode(&self, s: &HighwayState) -> Encoded {
        let mut neighbors = Vec::with_capacity(s.neighbors.len() * NEIGHBOR_FEATURES);
        for n in &s.neighbors {
            neighbors.push(n.dx / s.sensor_range);
            neighbors.push((n.v - s.ego_v) / SPEED_SCALE);
            neighbors.push(n.lane as f64 - s.ego_lane as f64);
        }
        let ego = vec![(s.ego_v - s.ego_v_des) / SPEED_SCALE, s.ego_lane as f64 - 1.0];
        Encoded::Set { neighbors, ego }
    }
}

/// One-hot state index, for exact comparisons against tabular learning.
#[derive(Debug, Clone, Copy)]
pub struct OneHotEncoder {
    pub n_states: usize,
}

impl Encode<usize> for OneHotEncoder {
    fn encode(&self, s: &usize) -> Encoded {
        let mut x = vec![0.0; self.n_states];
        x[*s] = 1.0;
        Encoded::Flat(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::highway::NeighborView;

    #[test]
    fn highway_features_are_ego_relative() {
        let s = HighwayState {
            ego_v: 24.0,
            ego_lane: 1,
            ego_v_des: 25.0,
            ego_length: 5.0,
            n_lanes: 3,
            sensor_range: 100.0,
            neighbors: vec![NeighborView { dx: 50.0, v: 20.0, lane: 2, length: 5.0 }],
        };
        match HighwayEncoder.encode(&s) {
            Encoded::Set { neighbors, ego } => {
                assert_eq!(neighbors, vec![0.5, -0.4, 1.0]);
                assert_eq!(ego, vec![-0.1, 0.0]);
            }
            Encoded::Flat(_) => panic!("expected a set encoding"),
        }
    }

    #[test]
    fn one_hot_places_the_single_one() {
        match (OneHotEncoder { n_states: 4 }).encode(&2usize) {
            Encoded::Flat(x) => assert_eq!(x, vec![0.0, 0.0, 1.0, 0.0]),
            _ => panic!(),
        }
    }
}
