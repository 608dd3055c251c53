//! Flat CSV layout for policy snapshots.
//!
//! ```text
//! # policy-snapshot v1
//! # clusters=2 states=17 candidates=10 scf=1,0 sigma=0.1 epsilon=0.5 alpha_theta=0.001 alpha_phi=0.01 alpha_omega=0.001
//! state,omega,theta_1,theta_2,phi_1_0,...,phi_1_9
//! 0,<omega[0]>,<theta_1[0]>,<theta_2[0]>,<phi_1[0,0]>,...
//! ```
//!
//! One row per state. `phi_<i>_<j>` columns appear only for SCF clusters
//! (1-based cluster numbers). Values use the shortest round-trip decimal form.

use thiserror::Error;

use crate::agent::{PgHyper, PolicyState};

const MAGIC: &str = "# policy-snapshot v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("missing or unknown snapshot header")]
    Header,
    #[error("bad metadata entry `{0}`")]
    Metadata(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

pub fn to_csv(policy: &PolicyState) -> String {
    let h = &policy.hyper;
    let scf: Vec<&str> = policy.phi.iter().map(|p| if p.is_some() { "1" } else { "0" }).collect();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "# clusters={} states={} candidates={} scf={} sigma={} epsilon={} alpha_theta={} alpha_phi={} alpha_omega={}\n",
        policy.clusters(),
        policy.n_states,
        h.candidate_seeds,
        scf.join(","),
        h.sigma,
        h.epsilon,
        h.alpha_theta,
        h.alpha_phi,
        h.alpha_omega
    ));
    let mut header = vec!["state".to_string(), "omega".to_string()];
    for i in 0..policy.clusters() {
        header.push(format!("theta_{}", i + 1));
    }
    for (i, phi) in policy.phi.iter().enumerate() {
        if phi.is_some() {
            header.extend((0..h.candidate_seeds).map(|j| format!("phi_{}_{}", i + 1, j)));
        }
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let q = h.candidate_seeds;
    for s in 0..policy.n_states {
        let mut row = vec![s.to_string(), policy.omega[s].to_string()];
        row.extend(policy.theta.iter().map(|t| t[s].to_string()));
        for phi in policy.phi.iter().flatten() {
            row.extend(phi[s * q..(s + 1) * q].iter().map(|v| v.to_string()));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<PolicyState, SnapshotError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(SnapshotError::Header);
    }
    let meta = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or(SnapshotError::Header)?;
    let mut hyper = PgHyper::default();
    let (mut clusters, mut states, mut scf) = (None, None, Vec::new());
    for entry in meta.split_whitespace() {
        let (key, value) = entry.split_once('=').ok_or_else(|| SnapshotError::Metadata(entry.into()))?;
        let bad = || SnapshotError::Metadata(entry.into());
        let float = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match key {
            "clusters" => clusters = Some(value.parse::<usize>().map_err(|_| bad())?),
            "states" => states = Some(value.parse::<usize>().map_err(|_| bad())?),
            "candidates" => hyper.candidate_seeds = value.parse().map_err(|_| bad())?,
            "scf" => {
                scf = value
                    .split(',')
                    .map(|f| match f {
                        "1" => Ok(true),
                        "0" => Ok(false),
                        _ => Err(bad()),
                    })
                    .collect::<Result<_, _>>()?
            }
            "sigma" => hyper.sigma = float(value)?,
            "epsilon" => hyper.epsilon = float(value)?,
            "alpha_theta" => hyper.alpha_theta = float(value)?,
            "alpha_phi" => hyper.alpha_phi = float(value)?,
            "alpha_omega" => hyper.alpha_omega = float(value)?,
            _ => return Err(bad()),
        }
    }
    let clusters = clusters.ok_or_else(|| SnapshotError::Metadata("clusters".into()))?;
    let states = states.ok_or_else(|| SnapshotError::Metadata("states".into()))?;
    if scf.len() != clusters {
        return Err(SnapshotError::Metadata("scf".into()));
    }
    let mut policy = PolicyState::cold_start(hyper, states, &scf);
    let q = policy.q();
    let expected_cols = 2 + clusters + q * scf.iter().filter(|&&b| b).count();
    lines.next().ok_or(SnapshotError::Header)?;
    let mut seen = 0;
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 4;
        if line.trim().is_empty() {
            continue;
        }
        let row_err = |message: String| SnapshotError::Row { line: line_no, message };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != expected_cols {
            return Err(row_err(format!("expected {expected_cols} columns, got {}", cols.len())));
        }
        let s: usize = cols[0].parse().map_err(|_| row_err("bad state index".into()))?;
        if s >= states {
            return Err(row_err(format!("state {s} out of range")));
        }
        let values: Vec<f64> = cols[1..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| row_err(e.to_string()))?;
        policy.omega[s] = values[0];
        for i in 0..clusters {
            policy.theta[i][s] = values[1 + i];
        }
        let mut col = 1 + clusters;
        for phi in policy.phi.iter_mut().flatten() {
            phi[s * q..(s + 1) * q].copy_from_slice(&values[col..col + q]);
            col += q;
        }
        seen += 1;
    }
    if seen != states {
        return Err(SnapshotError::Row {
            line: 0,
            message: format!("expected {states} state rows, got {seen}"),
        });
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e6f64..1e6, 5 * (1 + 2 + 3))) {
            let hyper = PgHyper { candidate_seeds: 3, ..PgHyper::default() };
            let mut p = PolicyState::cold_start(hyper, 5, &[true, false]);
            let mut it = values.into_iter();
            for s in 0..5 {
                p.omega[s] = it.next().unwrap();
                p.theta[0][s] = it.next().unwrap();
                p.theta[1][s] = it.next().unwrap();
                for j in 0..3 {
                    p.phi[0].as_mut().unwrap()[s * 3 + j] = it.next().unwrap();
                }
            }
            let back = from_csv(&to_csv(&p)).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn layout_header() {
        let p = PolicyState::cold_start(PgHyper { candidate_seeds: 2, ..PgHyper::default() }, 2, &[true, false]);
        let csv = to_csv(&p);
        let header = csv.lines().nth(2).unwrap();
        assert_eq!(header, "state,omega,theta_1,theta_2,phi_1_0,phi_1_1");
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(from_csv("hello"), Err(SnapshotError::Header));
        let p = PolicyState::cold_start(PgHyper::default(), 2, &[false]);
        let csv = to_csv(&p).replace("0,0,0\n1,0,0", "0,0,0");
        assert!(from_csv(&csv).is_err());
    }
}
