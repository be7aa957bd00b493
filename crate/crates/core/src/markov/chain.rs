use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// Finite-state, time-homogeneous Markov chain with a known stationary
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

impl FiniteChain {
    /// Validates a row-stochastic `transition` and its stationary vector.
    pub fn new(transition: DMatrix<f64>, stationary: DVector<f64>) -> Result<Self> {
        validate_stochastic(&transition)?;
        validate_distribution(&stationary, transition.nrows())?;
        let chain = Self { transition, stationary };
        let residual = chain.stationarity_residual();
        if residual > STATIONARY_TOL {
            return Err(Error::InvalidArgument(format!(
                "supplied distribution is not stationary (‖πP − π‖∞ = {residual:e})"
            )));
        }
        Ok(chain)
    }

    /// Solves `π P = π`, `Σπ = 1` directly. Fails for chains without a unique
    /// stationary distribution.
    pub fn from_transition(transition: DMatrix<f64>) -> Result<Self> {
        validate_stochastic(&transition)?;
        let n = transition.nrows();
        let mut system = DMatrix::identity(n, n) - transition.transpose();
        for j in 0..n {
            system[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = system
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular { matrix: "I - Pᵀ", condition: f64::INFINITY })?;
        if pi.iter().any(|&p| p < -1e-12) {
            return Err(Error::InvalidArgument("chain has no nonnegative stationary distribution".into()));
        }
        let mut pi = pi.map(|p| p.max(0.0));
        let total = pi.sum();
        pi /= total;
        Self::new(transition, pi)
    }

    /// `P = [[1−p, p], [q, 1−q]]`.
    pub fn two_state(p: f64, q: f64) -> Result<Self> {
        if !((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q)) || p + q == 0.0 {
            return Err(Error::InvalidArgument(format!("two-state chain needs p, q in [0,1], p+q>0; got {p}, {q}")));
        }
        let transition = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q]);
        let stationary = DVector::from_row_slice(&[q / (p + q), p / (p + q)]);
        Self::new(transition, stationary)
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// `‖πP − π‖∞`
    pub fn stationarity_residual(&self) -> f64 {
        let pi_p = self.transition.tr_mul(&self.stationary);
        (pi_p - &self.stationary).amax()
    }

    /// `max_{i,j} |π_i P_ij − π_j P_ji|`
    pub fn detailed_balance_residual(&self) -> f64 {
        let n = self.states();
        let (p, pi) = (&self.transition, &self.stationary);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((pi[i] * p[(i, j)] - pi[j] * p[(j, i)]).abs());
            }
        }
        worst
    }

    /// Text form: `S`, then `S` rows of `P`, then the row of `π`; entries in
    /// `%.16e` so that reading back is bit-exact.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states();
        writeln!(w, "{n}")?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.transition[(i, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let row: Vec<String> = self.stationary.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(s))) => Ok((n, s)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Parse { line: 0, message: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (ln, header) = next_line("state count")?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|e| Error::Parse { line: ln, message: format!("bad state count: {e}") })?;
        if n == 0 {
            return Err(Error::Parse { line: ln, message: "state count must be positive".into() });
        }
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            let (ln, line) = next_line(&format!("row {i}"))?;
            data.extend(parse_row(&line, n, ln)?);
        }
        let (ln, line) = next_line("stationary row")?;
        let pi = parse_row(&line, n, ln)?;
        Self::new(DMatrix::from_row_slice(n, n, &data), DVector::from_vec(pi))
    }
}

fn parse_row(line: &str, n: usize, ln: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse { line: ln, message: format!("bad number {t:?}: {e}") }))
        .collect::<Result<Vec<f64>>>()?;
    if row.len() != n {
        return Err(Error::Parse { line: ln, message: format!("expected {n} entries, found {}", row.len()) });
    }
    Ok(row)
}

pub(crate) fn validate_stochastic(p: &DMatrix<f64>) -> Result<()> {
    let (r, c) = p.shape();
    if r == 0 || r != c {
        return Err(Error::InvalidArgument(format!("transition matrix must be square and non-empty, got {r}x{c}")));
    }
    for i in 0..r {
        let row = p.row(i);
        if let Some(j) = row.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("P[{i}][{j}] = {} is not a probability", p[(i, j)])));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

pub(crate) fn validate_distribution(pi: &DVector<f64>, n: usize) -> Result<()> {
    if pi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: pi.len() });
    }
    if let Some(index) = pi.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidDistribution { index, value: pi[index] });
    }
    let s = pi.sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidArgument(format!("distribution sums to {s}")));
    }
    Ok(())
}

/// Metropolis–Hastings chain targeting `pi` with proposal `q`, mixed with
/// the identity: `P = laziness·I + (1 − laziness)·MH(π, Q)`.
pub fn metropolis_hastings(pi: &DVector<f64>, q: &DMatrix<f64>, laziness: f64) -> Result<FiniteChain> {
    let n = q.nrows();
    validate_stochastic(q)?;
    if pi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: pi.len() });
    }
    if let Some(index) = pi.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidDistribution { index, value: pi[index] });
    }
    let total = pi.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("target distribution sums to {total}")));
    }
    let pi = pi / total;
    if !(0.0..1.0).contains(&laziness) {
        return Err(Error::InvalidArgument(format!("laziness must lie in [0, 1), got {laziness}")));
    }

    let keep = 1.0 - laziness;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (qij, qji) = (q[(i, j)], q[(j, i)]);
            match (qij > 0.0, qji > 0.0) {
                (false, false) => continue,
                (true, false) => return Err(Error::InvalidProposal { i, j }),
                (false, true) => return Err(Error::InvalidProposal { i: j, j: i }),
                (true, true) => {}
            }
            // π_i P_ij = π_j P_ji = (1 − laziness)·min(π_i Q_ij, π_j Q_ji)
            let flow = keep * (pi[i] * qij).min(pi[j] * qji);
            p[(i, j)] = flow / pi[i];
            p[(j, i)] = flow / pi[j];
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = 1.0 - off;
    }
    FiniteChain::new(p, pi)
}

/// Symmetric random-walk proposal on `0..states`: step uniformly in
/// `{−window, …, window}` and reflect at both ends.
pub fn window_proposal(states: usize, window: usize) -> Result<DMatrix<f64>> {
    if states == 0 {
        return Err(Error::InvalidArgument("proposal needs at least one state".into()));
    }
    if states == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0));
    }
    // Reflection about the half-integer points −½ and S − ½: positions on a
    // cycle of length 2S, with s and 2S − 1 − s identified. Every state has
    // two preimages, so Q is symmetric.
    let period = 2 * states as i64;
    let fold = |x: i64| -> usize {
        let r = x.rem_euclid(period);
        (if r < states as i64 { r } else { period - 1 - r }) as usize
    };
    let w = window as i64;
    let weight = 1.0 / (2 * window + 1) as f64;
    let mut q = DMatrix::zeros(states, states);
    for i in 0..states {
        for m in -w..=w {
            q[(i, fold(i as i64 + m))] += weight;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_two_state_lazy_chain() {
        let pi = DVector::from_row_slice(&[0.5, 0.5]);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = metropolis_hastings(&pi, &swap, 0.5).unwrap();
        for v in c.transition().iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn asymmetric_two_state_acceptance() {
        let pi = DVector::from_row_slice(&[0.75, 0.25]);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = metropolis_hastings(&pi, &swap, 0.0).unwrap();
        let p = c.transition();
        assert_relative_eq!(p[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[(1, 1)], 0.0, epsilon = 1e-15);
        assert!(c.stationarity_residual() <= 1e-12);
    }

    #[test]
    fn asymmetric_support_is_rejected() {
        let pi = DVector::from_row_slice(&[0.5, 0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(metropolis_hastings(&pi, &q, 0.0).unwrap_err(), Error::InvalidProposal { i: 0, j: 1 });
    }

    #[test]
    fn target_must_be_positive() {
        let pi = DVector::from_row_slice(&[1.0, 0.0]);
        let q = DMatrix::from_element(2, 2, 0.5);
        assert_eq!(
            metropolis_hastings(&pi, &q, 0.0).unwrap_err(),
            Error::InvalidDistribution { index: 1, value: 0.0 }
        );
    }

    #[test]
    fn window_proposal_is_symmetric_and_stochastic() {
        for (s, k) in [(2usize, 1usize), (5, 2), (11, 3), (10, 25), (101, 40)] {
            let q = window_proposal(s, k).unwrap();
            validate_stochastic(&q).unwrap();
            assert!((&q - q.transpose()).amax() < 1e-15, "S={s} k={k}");
        }
        // k = 1 on two states: the step off the end reflects back in place
        let q = window_proposal(2, 1).unwrap();
        assert_relative_eq!(q[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn stationary_solve_matches_two_state_formula() {
        let p = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.6, 0.4]);
        let c = FiniteChain::from_transition(p).unwrap();
        assert_relative_eq!(c.stationary()[0], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_malformed_inputs() {
        let bad_row = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(FiniteChain::from_transition(bad_row).is_err());
        let p = DMatrix::from_element(2, 2, 0.5);
        assert_eq!(
            FiniteChain::new(p.clone(), DVector::from_row_slice(&[1.5, -0.5])).unwrap_err(),
            Error::InvalidDistribution { index: 1, value: -0.5 }
        );
        assert!(FiniteChain::new(p, DVector::from_row_slice(&[0.9, 0.1])).is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let pi = DVector::from_row_slice(&[0.1, 0.2, 0.3, 0.4]);
        let c = metropolis_hastings(&pi, &window_proposal(4, 1).unwrap(), 0.123456789).unwrap();
        let mut buf = Vec::new();
        c.write_text(&mut buf).unwrap();
        let back = FiniteChain::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        let text = "2\n0.5 0.5\n0.5 x\n0.5 0.5\n";
        match FiniteChain::read_text(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
        assert!(FiniteChain::read_text("2\n0.5 0.5\n".as_bytes()).is_err());
    }
}
