#![allow(dead_code)]

pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relayflow::channel::{Deployment, Point};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const LAYOUT: [Point; 6] = [[-4.5, 0.0], [-2.7, 0.0], [-0.9, 0.0], [0.9, 0.0], [2.7, 0.0], [4.5, 0.0]];

pub fn layout(jammer: Point) -> Deployment {
    Deployment::new(LAYOUT.to_vec(), jammer).unwrap()
}

/// Six nodes and a jammer, uniformly in `[-5, 5]²`, pairwise at least 0.4 apart.
pub fn random_deployment<R: Rng>(rng: &mut R) -> Deployment {
    loop {
        let pts: Vec<Point> = (0..7).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let ok = (0..7).all(|i| {
            (i + 1..7).all(|j| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt() > 0.4)
        });
        if ok {
            return Deployment::new(pts[..6].to_vec(), pts[6]).unwrap();
        }
    }
}

/// The default start layout with relays jittered by up to ±1 and a jammer
/// kept at least 1 away from every node.
pub fn jittered_layout<R: Rng>(rng: &mut R) -> Deployment {
    loop {
        let mut pts = LAYOUT.to_vec();
        for p in pts.iter_mut().take(5).skip(1) {
            p[0] += rng.random_range(-1.0..1.0);
            p[1] += rng.random_range(-1.0..1.0);
        }
        let j = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
        let far = pts.iter().all(|p| ((p[0] - j[0]).powi(2) + (p[1] - j[1]).powi(2)).sqrt() > 1.0);
        let spread = (0..6).all(|a| {
            (a + 1..6).all(|b| ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt() > 0.3)
        });
        if far && spread {
            return Deployment::new(pts, j).unwrap();
        }
    }
}

/// Flattened coordinates of every node, `[x0, y0, x1, y1, ...]`.
pub fn flatten(dep: &Deployment) -> Vec<f64> {
    dep.positions().iter().flat_map(|p| [p[0], p[1]]).collect()
}

pub fn rebuild(flat: &[f64], jammer: Point) -> Deployment {
    Deployment::new(flat.chunks(2).map(|c| [c[0], c[1]]).collect(), jammer).unwrap()
}
