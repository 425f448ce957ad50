use serde::{Deserialize, Serialize};

use crate::alignment::FrameAssignment;
use crate::error::{Error, Result};
use crate::explain::{Method, SaliencyVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Utterance,
    Global,
}

/// Importance per inventory phoneme; `None` marks a phoneme without frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pid {
    pub values: Vec<Option<f64>>,
    /// Frames (utterance scope) or contributing utterances (global scope).
    pub counts: Vec<usize>,
    pub scope: Scope,
    pub method: Method,
}

impl Pid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Mean saliency over each phoneme's pure frames.
pub fn utterance_pid(xi: &SaliencyVector, fa: &FrameAssignment) -> Result<Pid> {
    let t_len = xi.values.len();
    if let Some(&t) = fa.frames.iter().flatten().find(|&&t| t >= t_len) {
        return Err(Error::Dimension(format!("frame {t} outside saliency vector of length {t_len}")));
    }
    let values = fa
        .frames
        .iter()
        .map(|f| (!f.is_empty()).then(|| f.iter().map(|&t| xi.values[t]).sum::<f64>() / f.len() as f64))
        .collect();
    Ok(Pid {
        values,
        counts: fa.frames.iter().map(Vec::len).collect(),
        scope: Scope::Utterance,
        method: xi.method,
    })
}

/// Mean of utterance PIDs, per phoneme over the utterances where it is present.
pub fn global_pid(pids: &[Pid]) -> Result<Pid> {
    let first = pids
        .first()
        .ok_or_else(|| Error::InvalidArgument("global PID needs at least one utterance".into()))?;
    let n = first.len();
    if let Some(p) = pids.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension(format!("PID lengths differ: {} vs {n}", p.len())));
    }
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for p in pids {
        for (q, v) in p.values.iter().enumerate() {
            if let Some(v) = v {
                sums[q] += v;
                counts[q] += 1;
            }
        }
    }
    Ok(Pid {
        values: sums.iter().zip(&counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect(),
        counts,
        scope: Scope::Global,
        method: first.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi(v: &[f64]) -> SaliencyVector {
        SaliencyVector {
            values: v.to_vec(),
            method: Method::Tao,
            target: 0,
            normalized: false,
        }
    }

    fn fa(frames: Vec<Vec<usize>>) -> FrameAssignment {
        let present = frames.iter().map(|f| !f.is_empty()).collect();
        FrameAssignment { frames, present }
    }

    #[test]
    fn utterance_means() {
        let p = utterance_pid(&xi(&[0.0, 0.0, 4.0, 8.0, 0.0]), &fa(vec![vec![2, 3], vec![], vec![0, 4]])).unwrap();
        assert_eq!(p.values, [Some(6.0), None, Some(0.0)]);
        assert_eq!(p.counts, [2, 0, 2]);
        let ones = utterance_pid(&xi(&[1.0; 5]), &fa(vec![vec![0, 1], vec![3]])).unwrap();
        assert_eq!(ones.values, [Some(1.0), Some(1.0)]);
        assert!(utterance_pid(&xi(&[1.0; 3]), &fa(vec![vec![3]])).is_err());
    }

    #[test]
    fn global_masked_mean() {
        let a = Pid {
            values: vec![Some(1.0), Some(5.0), None],
            counts: vec![1, 1, 0],
            scope: Scope::Utterance,
            method: Method::Tao,
        };
        let b = Pid {
            values: vec![Some(3.0), None, None],
            ..a.clone()
        };
        let g = global_pid(&[a.clone(), b]).unwrap();
        assert_eq!(g.values, [Some(2.0), Some(5.0), None]);
        assert_eq!(g.counts, [2, 1, 0]);
        assert_eq!(global_pid(&[a.clone(), a.clone()]).unwrap().values, a.values);
        assert_eq!(global_pid(std::slice::from_ref(&a)).unwrap().values, a.values);
        assert!(global_pid(&[]).is_err());
    }
}
