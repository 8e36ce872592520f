use rand::Rng;
use rand_distr::Exp1;

use super::Map2;
use crate::error::Result;
use crate::exec::{for_each_chunk_mut, stream_rng, Execution};
use crate::linalg::Vec2;

const CHUNK: usize = 1 << 14;

/// Per-phase jump table of the phase process.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Jumps {
    rate: [f64; 2],
    // cumulative probabilities of (silent switch, loss into 0, loss into 1)
    cum: [[f64; 3]; 2],
}

impl Jumps {
    pub(crate) fn new(m: &Map2) -> Self {
        let (d0, d1) = (m.d0(), m.d1());
        let mut rate = [0.0; 2];
        let mut cum = [[0.0; 3]; 2];
        for i in 0..2 {
            let r = -d0.get(i, i);
            let w = [d0.get(i, 1 - i), d1.get(i, 0), d1.get(i, 1)];
            rate[i] = r;
            let mut acc = 0.0;
            for k in 0..3 {
                acc += w[k] / r;
                cum[i][k] = acc;
            }
            cum[i][2] = 1.0;
        }
        Jumps { rate, cum }
    }

    /// Advance from `phase` until the next jump. Returns the holding time,
    /// the new phase and whether the jump produced a loss.
    #[inline]
    pub(crate) fn step<R: Rng + ?Sized>(&self, phase: usize, rng: &mut R) -> (f64, usize, bool) {
        let e: f64 = rng.sample(Exp1);
        let hold = e / self.rate[phase];
        let u: f64 = rng.random();
        let c = &self.cum[phase];
        if u < c[0] {
            (hold, 1 - phase, false)
        } else if u < c[1] {
            (hold, 0, true)
        } else {
            (hold, 1, true)
        }
    }
}

fn draw_phase<R: Rng + ?Sized>(p: Vec2, rng: &mut R) -> usize {
    if rng.random::<f64>() < p.0[0] {
        0
    } else {
        1
    }
}

/// Simulate `n` consecutive inter-loss times of the stationary process,
/// starting at a loss epoch with phase drawn from `phi`.
pub fn simulate_map2(m: &Map2, n: usize, seed: u64) -> Result<Vec<f64>> {
    let st = m.stationary_objects()?;
    let jumps = Jumps::new(m);
    let mut rng = stream_rng(seed, 0);
    let mut phase = draw_phase(st.phi, &mut rng);
    let mut out = Vec::with_capacity(n);
    let mut elapsed = 0.0;
    while out.len() < n {
        let (hold, next, loss) = jumps.step(phase, &mut rng);
        elapsed += hold;
        phase = next;
        if loss {
            out.push(elapsed);
            elapsed = 0.0;
        }
    }
    Ok(out)
}

/// Loss counts in the adjacent windows `[0, tau)` and `[tau, 2 tau)` for
/// independent replicates of the stationary process (phase at time 0 drawn
/// from `pi`).
pub fn simulate_window_counts(
    m: &Map2,
    tau: f64,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(u32, u32)>> {
    let st = m.stationary_objects()?;
    let jumps = Jumps::new(m);
    let mut out = vec![(0u32, 0u32); replicates];
    for_each_chunk_mut(&mut out, CHUNK, exec, |ci, chunk| {
        let mut rng = stream_rng(seed, ci as u64);
        for slot in chunk.iter_mut() {
            let mut phase = draw_phase(st.pi, &mut rng);
            let mut t = 0.0;
            let mut counts = [0u32; 2];
            loop {
                let (hold, next, loss) = jumps.step(phase, &mut rng);
                t += hold;
                if t >= 2.0 * tau {
                    break;
                }
                phase = next;
                if loss {
                    counts[usize::from(t >= tau)] += 1;
                }
            }
            *slot = (counts[0], counts[1]);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let m = Map2::poisson(1.0).unwrap();
        assert_eq!(simulate_map2(&m, 50, 3).unwrap(), simulate_map2(&m, 50, 3).unwrap());
        assert_ne!(simulate_map2(&m, 50, 3).unwrap(), simulate_map2(&m, 50, 4).unwrap());
    }

    #[test]
    fn poisson_mean() {
        let m = Map2::poisson(1.0).unwrap();
        let t = simulate_map2(&m, 200_000, 11).unwrap();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn window_counts_modes_agree() {
        let m = Map2::poisson(0.5).unwrap();
        let a = simulate_window_counts(&m, 4.0, 40_000, 9, Execution::Parallel).unwrap();
        let b = simulate_window_counts(&m, 4.0, 40_000, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let mean = a.iter().map(|c| c.0 as f64).sum::<f64>() / a.len() as f64;
        assert!((mean - 2.0).abs() < 0.05);
    }
}
