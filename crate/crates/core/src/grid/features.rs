use crate::scalar::Scalar;

use super::{Grid, GridError};

pub const NODE_FEATURES: usize = 3;
pub const EDGE_FEATURES: usize = 2;
pub const GLOBAL_FEATURES: usize = 4;

/// Model inputs derived from a grid.
///
/// * node rows: `[p_inj, q_inj, hop distance to slack]`
/// * edge rows: `[r, x]`, one per line in line order
/// * globals: `[slack vm_ref, slack va_ref, slack source r, slack source x]`
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<T> {
    pub node_features: Vec<[T; NODE_FEATURES]>,
    pub edge_features: Vec<[T; EDGE_FEATURES]>,
    pub global_features: [T; GLOBAL_FEATURES],
}

impl<T: Scalar> FeatureSet<T> {
    pub fn node_shape(&self) -> (usize, usize) {
        (self.node_features.len(), NODE_FEATURES)
    }

    pub fn edge_shape(&self) -> (usize, usize) {
        (self.edge_features.len(), EDGE_FEATURES)
    }

    pub fn global_shape(&self) -> usize {
        GLOBAL_FEATURES
    }
}

pub fn extract_features<T: Scalar>(grid: &Grid<T>) -> Result<FeatureSet<T>, GridError> {
    let hops = grid.hop_distances()?;
    let node_features = grid
        .buses()
        .iter()
        .zip(&hops)
        .map(|(bus, &d)| [bus.p_inj, bus.q_inj, T::lit(d as f64)])
        .collect();
    let edge_features = grid.lines().iter().map(|l| [l.r, l.x]).collect();
    let slack = grid.slack_bus();
    let [rs, xs] = grid.slack_impedance();
    Ok(FeatureSet {
        node_features,
        edge_features,
        global_features: [slack.vm_ref, slack.va_ref, rs, xs],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Line};

    #[test]
    fn slack_only() {
        let g: Grid<f64> = Grid::new(vec![Bus::<f64>::slack(0, 1.0, 0.0)], vec![], 0.4, "t").unwrap();
        let f = extract_features(&g).unwrap();
        assert_eq!(f.node_features, vec![[0.0, 0.0, 0.0]]);
        assert_eq!(f.node_shape(), (1, 3));
        assert_eq!(f.edge_shape(), (0, 2));
    }

    #[test]
    fn two_bus_rows() {
        let g: Grid<f64> = Grid::new(
            vec![Bus::slack(0, 1.02, 0.1), Bus::pq(1, -0.1, -0.05)],
            vec![Line::new(0, 1, 0.1, 0.2)],
            0.4,
            "t",
        )
        .unwrap()
        .with_slack_impedance(0.01, 0.03);
        let f = extract_features(&g).unwrap();
        assert_eq!(f.node_features[1], [-0.1, -0.05, 1.0]);
        assert_eq!(f.edge_features, vec![[0.1, 0.2]]);
        assert_eq!(f.global_features, [1.02, 0.1, 0.01, 0.03]);
        assert_eq!(f, extract_features(&g).unwrap());
    }
}
