use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{global_pid, spearman, spearman_dense, Pid};
use crate::error::{Error, Result};

/// Agreement between two explanation methods over the same utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConsistency {
    /// Mean per-utterance correlation of frame saliency.
    pub r1: Option<f64>,
    /// Mean per-utterance correlation of PIDs.
    pub r2: Option<f64>,
    /// Correlation of the global PIDs.
    pub r3: Option<f64>,
    pub utterances: usize,
    pub r1_excluded: usize,
    pub r2_excluded: usize,
}

fn mean_defined(rs: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for r in rs {
        match r {
            Some(r) => {
                sum += r;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

pub fn method_consistency(xi_a: &[&[f64]], xi_b: &[&[f64]], pid_a: &[Pid], pid_b: &[Pid]) -> Result<MethodConsistency> {
    let n = xi_a.len();
    if xi_b.len() != n || pid_a.len() != n || pid_b.len() != n {
        return Err(Error::Dimension("method consistency inputs cover different utterance counts".into()));
    }
    if let Some(i) = (0..n).find(|&i| xi_a[i].len() != xi_b[i].len()) {
        return Err(Error::Dimension(format!("utterance {i}: saliency lengths differ")));
    }
    let (r1, r1_excluded) = mean_defined((0..n).map(|i| spearman_dense(xi_a[i], xi_b[i])));
    let (r2, r2_excluded) = mean_defined((0..n).map(|i| spearman(&pid_a[i].values, &pid_b[i].values)));
    let r3 = if n == 0 {
        None
    } else {
        spearman(&global_pid(pid_a)?.values, &global_pid(pid_b)?.values)
    };
    Ok(MethodConsistency {
        r1,
        r2,
        r3,
        utterances: n,
        r1_excluded,
        r2_excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

/// Pairwise Spearman of global PIDs; symmetric by construction.
pub fn model_consistency(pids: &[(String, Pid)]) -> Result<ConsistencyMatrix> {
    let n = pids.len();
    if n < 2 {
        return Err(Error::InvalidArgument("model consistency needs at least two PIDs".into()));
    }
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = spearman(&pids[i].1.values, &pids[j].1.values);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(ConsistencyMatrix {
        labels: pids.iter().map(|p| p.0.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakerOptions {
    /// Cross-speaker pairs beyond this count are sampled.
    pub max_between_pairs: usize,
    pub seed: u64,
}

impl Default for SpeakerOptions {
    fn default() -> Self {
        Self {
            max_between_pairs: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerCorrelation {
    pub r_w: Option<f64>,
    pub r_b: Option<f64>,
    pub within_pairs: usize,
    pub between_pairs: usize,
    pub within_excluded: usize,
    pub between_excluded: usize,
    pub between_sampled: bool,
}

/// Within- and between-speaker PID correlations over ordered utterance
/// pairs. `r_w` averages per-speaker means; `r_b` averages all (or a seeded
/// sample of) cross-speaker pairs.
pub fn speaker_correlations(pids: &[(String, Pid)], opts: &SpeakerOptions) -> Result<SpeakerCorrelation> {
    let n = pids.len();
    let corr = |i: usize, j: usize| spearman(&pids[i].1.values, &pids[j].1.values);
    let mut speakers: Vec<&str> = pids.iter().map(|p| p.0.as_str()).collect();
    speakers.sort_unstable();
    speakers.dedup();

    let (mut within_pairs, mut within_excluded) = (0, 0);
    let mut per_speaker = Vec::new();
    for s in &speakers {
        let members: Vec<usize> = (0..n).filter(|&i| pids[i].0 == *s).collect();
        let m = members.len();
        let mut cache = vec![None; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let r = corr(members[a], members[b]);
                cache[a * m + b] = r;
                cache[b * m + a] = r;
            }
        }
        let (mut sum, mut k) = (0.0, 0usize);
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                within_pairs += 1;
                match cache[a * m + b] {
                    Some(r) => {
                        sum += r;
                        k += 1;
                    }
                    None => within_excluded += 1,
                }
            }
        }
        if k > 0 {
            per_speaker.push(sum / k as f64);
        }
    }
    let r_w = (!per_speaker.is_empty()).then(|| per_speaker.iter().sum::<f64>() / per_speaker.len() as f64);

    let cross: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| pids[i].0 != pids[j].0).map(move |j| (i, j)))
        .collect();
    let sampled = cross.len() > opts.max_between_pairs;
    let chosen: Vec<(usize, usize)> = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = rand::seq::index::sample(&mut rng, cross.len(), opts.max_between_pairs).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| cross[k]).collect()
    } else {
        cross
    };
    let mut cache = std::collections::HashMap::new();
    let (r_b, between_excluded) = mean_defined(chosen.iter().map(|&(i, j)| *cache.entry((i.min(j), i.max(j))).or_insert_with(|| corr(i, j))));
    Ok(SpeakerCorrelation {
        r_w,
        r_b,
        within_pairs,
        between_pairs: chosen.len(),
        within_excluded,
        between_excluded,
        between_sampled: sampled,
    })
}
