//! Discrete Laplace solve over an arbitrary set of unknown pixels.
//!
//! Unknown pixels satisfy the 4-neighbor mean-value property; known pixels
//! act as Dirichlet values. Neighbors outside the image are dropped, which
//! makes the image border a zero-flux boundary.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicSolver {
    /// Stop once the largest per-pixel correction in a sweep falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for HarmonicSolver {
    fn default() -> Self {
        HarmonicSolver {
            tolerance: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub sweeps: usize,
    pub residual: f64,
    pub converged: bool,
}

struct Node {
    at: usize,
    neighbors: [usize; 4],
    degree: usize,
}

impl HarmonicSolver {
    /// Overwrite the unknown entries of `plane` with the harmonic interpolant
    /// of the known entries. Uses successive over-relaxation in raster order.
    pub fn solve(&self, plane: &mut [f64], width: usize, height: usize, unknown: &[bool]) -> Result<SolveReport> {
        debug_assert_eq!(plane.len(), width * height);
        debug_assert_eq!(unknown.len(), width * height);
        let nodes = build_nodes(width, height, unknown);
        if nodes.is_empty() {
            return Ok(SolveReport {
                sweeps: 0,
                residual: 0.0,
                converged: true,
            });
        }
        if nodes.len() == width * height {
            return Err(Error::MaskCoversFrame);
        }

        // start from the mean of the known ring
        let (mut ring_sum, mut ring_n) = (0.0, 0usize);
        for n in &nodes {
            for &q in &n.neighbors[..n.degree] {
                if !unknown[q] {
                    ring_sum += plane[q];
                    ring_n += 1;
                }
            }
        }
        let start = ring_sum / ring_n as f64;
        for n in &nodes {
            plane[n.at] = start;
        }

        let omega = relaxation_factor(&nodes, width);
        let mut report = SolveReport {
            sweeps: 0,
            residual: f64::INFINITY,
            converged: false,
        };
        while report.sweeps < self.max_sweeps {
            let mut worst = 0.0f64;
            for n in &nodes {
                let sum: f64 = n.neighbors[..n.degree].iter().map(|&q| plane[q]).sum();
                let r = sum / n.degree as f64 - plane[n.at];
                plane[n.at] += omega * r;
                worst = worst.max(r.abs());
            }
            report.sweeps += 1;
            report.residual = worst;
            if worst < self.tolerance {
                report.converged = true;
                break;
            }
        }
        if !report.converged {
            log::warn!(
                "harmonic solve stopped after {} sweeps at residual {:e}",
                report.sweeps,
                report.residual
            );
        }
        Ok(report)
    }
}

fn build_nodes(width: usize, height: usize, unknown: &[bool]) -> Vec<Node> {
    let mut nodes = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let at = y * width + x;
            if !unknown[at] {
                continue;
            }
            let mut node = Node {
                at,
                neighbors: [0; 4],
                degree: 0,
            };
            let mut push = |q: usize| {
                node.neighbors[node.degree] = q;
                node.degree += 1;
            };
            if x > 0 {
                push(at - 1);
            }
            if x + 1 < width {
                push(at + 1);
            }
            if y > 0 {
                push(at - width);
            }
            if y + 1 < height {
                push(at + width);
            }
            nodes.push(node);
        }
    }
    nodes
}

/// Optimal SOR factor for a square of the unknown set's bounding-box extent.
fn relaxation_factor(nodes: &[Node], width: usize) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for n in nodes {
        let (x, y) = (n.at % width, n.at / width);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let extent = (x1 - x0).max(y1 - y0) + 1;
    2.0 / (1.0 + (std::f64::consts::PI / (extent as f64 + 1.0)).sin())
}
