use serde::{Deserialize, Serialize};

use super::Pid;
use crate::alignment::Inventory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidRanking {
    pub top: Vec<String>,
    pub bottom: Vec<String>,
    /// Phonemes tied with the value at a cut; their inclusion followed inventory order.
    pub ties: Vec<String>,
    /// All present values are equal.
    pub degenerate: bool,
}

/// Per-PID top/bottom lists and their unions, both in inventory order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub k: usize,
    pub per_pid: Vec<PidRanking>,
    pub top_union: Vec<String>,
    pub bottom_union: Vec<String>,
}

fn rank_one(pid: &Pid, inv: &Inventory, k: usize) -> Result<PidRanking> {
    let present: Vec<(usize, f64)> = pid.values.iter().enumerate().filter_map(|(q, v)| v.map(|v| (q, v))).collect();
    if k > present.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {} present phonemes", present.len())));
    }
    let mut desc = present.clone();
    desc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut asc = present.clone();
    asc.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut ties = Vec::new();
    for order in [&desc, &asc] {
        if k > 0 && k < order.len() && order[k - 1].1 == order[k].1 {
            let cut = order[k - 1].1;
            ties.extend(order.iter().filter(|p| p.1 == cut).map(|p| p.0));
        }
    }
    ties.sort_unstable();
    ties.dedup();
    let sym = |q: usize| inv.phonemes[q].symbol.clone();
    Ok(PidRanking {
        top: desc[..k].iter().map(|p| sym(p.0)).collect(),
        bottom: asc[..k].iter().map(|p| sym(p.0)).collect(),
        ties: ties.into_iter().map(sym).collect(),
        degenerate: present.windows(2).all(|w| w[0].1 == w[1].1),
    })
}

pub fn rank_phonemes(pids: &[&Pid], inventory: &Inventory, k: usize) -> Result<Ranking> {
    let per_pid = pids.iter().map(|p| rank_one(p, inventory, k)).collect::<Result<Vec<_>>>()?;
    let union = |pick: fn(&PidRanking) -> &Vec<String>| {
        inventory
            .symbols()
            .filter(|s| per_pid.iter().any(|r| pick(r).iter().any(|x| x == s)))
            .map(String::from)
            .collect()
    };
    Ok(Ranking {
        k,
        top_union: union(|r| &r.top),
        bottom_union: union(|r| &r.bottom),
        per_pid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Scope;
    use crate::explain::Method;

    fn pid(values: Vec<Option<f64>>) -> Pid {
        Pid {
            counts: vec![1; values.len()],
            values,
            scope: Scope::Global,
            method: Method::Tao,
        }
    }

    #[test]
    fn single_pid_and_unions() {
        let inv = Inventory::digits();
        let mut v: Vec<Option<f64>> = (0..31).map(|q| Some(q as f64)).collect();
        v[0] = None;
        let a = pid(v);
        let r = rank_phonemes(&[&a], &inv, 2).unwrap();
        assert_eq!(r.per_pid[0].top, ["n_3", "aj_2"].map(String::from));
        assert_eq!(r.per_pid[0].bottom, ["I", "r"].map(String::from));
        assert!(!r.per_pid[0].degenerate && r.per_pid[0].ties.is_empty());
        let b = pid((0..31).map(|q| Some(-(q as f64))).collect());
        let r = rank_phonemes(&[&a, &b], &inv, 1).unwrap();
        assert_eq!(r.top_union, ["z", "n_3"].map(String::from));
        assert_eq!(r.bottom_union, ["I", "n_3"].map(String::from));
    }

    #[test]
    fn ties_follow_inventory_order() {
        let inv = Inventory::digits();
        let flat = pid(vec![Some(0.5); 31]);
        let r = rank_phonemes(&[&flat], &inv, 3).unwrap();
        assert_eq!(r.per_pid[0].top, ["z", "I", "r"].map(String::from));
        assert_eq!(r.per_pid[0].top, r.per_pid[0].bottom);
        assert!(r.per_pid[0].degenerate);
        assert_eq!(r.per_pid[0].ties.len(), 31);
        assert!(rank_phonemes(&[&pid(vec![None; 31])], &inv, 1).is_err());
    }
}
