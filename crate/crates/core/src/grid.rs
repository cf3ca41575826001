//! eMBB side of the world: codeword placement over the F×T resource lattice,
//! puncture bookkeeping and the per-frequency residual protection.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest class budget produced by the placement generator.
pub const MAX_CLASS: u32 = 1;

/// Probability of drawing a class-0 or a class-1 codeword.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub prob_class0: f64,
    pub prob_class1: f64,
}

impl ClassDistribution {
    pub fn new(prob_class0: f64, prob_class1: f64) -> Result<Self> {
        let valid = |p: f64| (0.0..=1.0).contains(&p);
        if !valid(prob_class0) || !valid(prob_class1) || (prob_class0 + prob_class1 - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "class distribution [{prob_class0}, {prob_class1}] is not a probability vector"
            )));
        }
        Ok(Self {
            prob_class0,
            prob_class1,
        })
    }

    /// The five compositions used for training and evaluation, from all
    /// class-1 to all class-0.
    pub fn standard_set() -> Vec<ClassDistribution> {
        [(0.0, 1.0), (0.2, 0.8), (0.5, 0.5), (0.8, 0.2), (1.0, 0.0)]
            .into_iter()
            .map(|(p0, p1)| ClassDistribution {
                prob_class0: p0,
                prob_class1: p1,
            })
            .collect()
    }

    /// Short label such as `[0.2,0.8]`.
    pub fn label(&self) -> String {
        format!("[{},{}]", self.prob_class0, self.prob_class1)
    }

    /// Parses `p0,p1` or `[p0,p1]`.
    pub fn parse(text: &str) -> Result<Self> {
        let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!("cannot parse class distribution '{text}'")));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse class distribution '{text}'")))
        };
        Self::new(parse(parts[0])?, parse(parts[1])?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codeword {
    pub id: usize,
    pub frequency: usize,
    pub start_minislot: usize,
    pub length: usize,
    /// Number of erased minislots the inner erasure code can absorb.
    pub class_budget: u32,
    pub puncture_count: u32,
    pub in_outage: bool,
}

impl Codeword {
    /// `max(C_w - rho(w), -1)`.
    pub fn residual(&self) -> i32 {
        (self.class_budget as i64 - self.puncture_count as i64).max(-1) as i32
    }

    /// Unclamped `C_w - rho(w)`.
    pub fn budget_left(&self) -> i64 {
        self.class_budget as i64 - self.puncture_count as i64
    }

    pub fn covers(&self, t: usize) -> bool {
        t >= self.start_minislot && t < self.start_minislot + self.length
    }
}

/// Result of puncturing one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PunctureOutcome {
    pub codeword: usize,
    /// This puncture moved the codeword from within budget into outage.
    pub new_outage: bool,
}

/// Fully occupied F×T lattice. Cell `(t, f)` is stored at `t * F + f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceGrid {
    freqs: usize,
    minislots: usize,
    cells: Vec<usize>,
    codewords: Vec<Codeword>,
}

impl ResourceGrid {
    /// Random placement: every frequency row is cut into `num_codewords / F`
    /// contiguous runs whose lengths are a uniform composition of `T`, and each
    /// codeword independently gets class 1 with probability `prob_class1`.
    pub fn generate_placement<R: Rng + ?Sized>(
        freqs: usize,
        minislots: usize,
        num_codewords: usize,
        dist: ClassDistribution,
        rng: &mut R,
    ) -> Result<Self> {
        if freqs == 0 || minislots == 0 || num_codewords == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive (F={freqs}, T={minislots}, |W|={num_codewords})"
            )));
        }
        if num_codewords % freqs != 0 {
            return Err(Error::Config(format!(
                "{num_codewords} codewords cannot be split evenly over {freqs} frequencies"
            )));
        }
        let per_row = num_codewords / freqs;
        if per_row > minislots {
            return Err(Error::Config(format!(
                "{per_row} codewords per row do not fit in {minislots} minislots"
            )));
        }

        let mut rows = Vec::with_capacity(freqs);
        for _ in 0..freqs {
            let mut cuts: Vec<usize> = index::sample(rng, minislots - 1, per_row - 1)
                .into_iter()
                .map(|c| c + 1)
                .collect();
            cuts.sort_unstable();
            let mut row = Vec::with_capacity(per_row);
            let mut prev = 0;
            for cut in cuts.into_iter().chain(std::iter::once(minislots)) {
                let class = u32::from(rng.gen_bool(dist.prob_class1));
                row.push((cut - prev, class));
                prev = cut;
            }
            rows.push(row);
        }
        Self::from_rows(minislots, &rows)
    }

    /// Builds a grid from explicit per-row `(length, class)` runs.
    pub fn from_rows(minislots: usize, rows: &[Vec<(usize, u32)>]) -> Result<Self> {
        let freqs = rows.len();
        if freqs == 0 || minislots == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        let mut cells = vec![usize::MAX; freqs * minislots];
        let mut codewords = Vec::new();
        for (f, row) in rows.iter().enumerate() {
            let mut start = 0;
            for &(length, class_budget) in row {
                if length == 0 || start + length > minislots {
                    return Err(Error::Config(format!(
                        "row {f}: codeword of length {length} at minislot {start} does not fit"
                    )));
                }
                let id = codewords.len();
                for t in start..start + length {
                    cells[t * freqs + f] = id;
                }
                codewords.push(Codeword {
                    id,
                    frequency: f,
                    start_minislot: start,
                    length,
                    class_budget,
                    puncture_count: 0,
                    in_outage: false,
                });
                start += length;
            }
            if start != minislots {
                return Err(Error::Config(format!(
                    "row {f} covers {start} of {minislots} minislots"
                )));
            }
        }
        Ok(Self {
            freqs,
            minislots,
            cells,
            codewords,
        })
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    pub fn minislots(&self) -> usize {
        self.minislots
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    fn check(&self, t: usize, f: usize) -> Result<()> {
        if t >= self.minislots || f >= self.freqs {
            return Err(Error::Usage(format!(
                "cell (t={t}, f={f}) outside {}x{} grid",
                self.minislots, self.freqs
            )));
        }
        Ok(())
    }

    /// Id of `w_{t,f}`.
    pub fn codeword_id(&self, t: usize, f: usize) -> Result<usize> {
        self.check(t, f)?;
        Ok(self.cells[t * self.freqs + f])
    }

    pub fn codeword_at(&self, t: usize, f: usize) -> Result<&Codeword> {
        Ok(&self.codewords[self.codeword_id(t, f)?])
    }

    /// `s_t(f)`.
    pub fn residual(&self, t: usize, f: usize) -> Result<i32> {
        Ok(self.codeword_at(t, f)?.residual())
    }

    /// `s_t(f)` for every frequency of minislot `t`.
    pub fn residuals_at(&self, t: usize) -> Result<Vec<i32>> {
        self.check(t, 0)?;
        let row = &self.cells[t * self.freqs..(t + 1) * self.freqs];
        Ok(row.iter().map(|&id| self.codewords[id].residual()).collect())
    }

    /// `sum over w in W_t of (C_w - rho(w))`, unclamped. With single-row
    /// codewords each frequency of a minislot holds a distinct codeword.
    pub fn budget_sum(&self, t: usize) -> Result<i64> {
        self.check(t, 0)?;
        let row = &self.cells[t * self.freqs..(t + 1) * self.freqs];
        Ok(row.iter().map(|&id| self.codewords[id].budget_left()).sum())
    }

    pub fn puncture(&mut self, t: usize, f: usize) -> Result<PunctureOutcome> {
        let id = self.codeword_id(t, f)?;
        let cw = &mut self.codewords[id];
        let was_ok = cw.puncture_count <= cw.class_budget;
        cw.puncture_count += 1;
        let new_outage = was_ok && cw.puncture_count > cw.class_budget;
        if new_outage {
            cw.in_outage = true;
        }
        Ok(PunctureOutcome {
            codeword: id,
            new_outage,
        })
    }

    pub fn outage_count(&self) -> usize {
        self.codewords.iter().filter(|c| c.in_outage).count()
    }

    pub fn outage_fraction(&self) -> f64 {
        self.outage_count() as f64 / self.codewords.len() as f64
    }

    /// Clears every puncture counter, keeping placement and classes.
    pub fn clear_punctures(&mut self) {
        for cw in &mut self.codewords {
            cw.puncture_count = 0;
            cw.in_outage = false;
        }
    }
}
