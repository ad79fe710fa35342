//! Lattice geometries: a finite interval of sites or a torus with a
//! position-periodicity offset.

use crate::error::{Error, Result};

/// Which one-dimensional lattice a state lives on.
///
/// Sites of the open interval are labeled by integers `n1..=n2`; the torus
/// has `n` sites labeled `0..n` with index arithmetic mod `n` and positions
/// extending via `q_{i+n} = q_i + upsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainSpec {
    OpenInterval { n1: i64, n2: i64 },
    Torus { n: usize, upsilon: f64 },
}

impl DomainSpec {
    pub fn open(n1: i64, n2: i64) -> Result<Self> {
        if n1 > n2 {
            return Err(Error::InvalidParameter(format!(
                "open interval requires n1 <= n2, got [{n1}, {n2}]"
            )));
        }
        Ok(DomainSpec::OpenInterval { n1, n2 })
    }

    pub fn torus(n: usize, upsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("torus requires n >= 1".into()));
        }
        if !upsilon.is_finite() {
            return Err(Error::InvalidParameter("torus period must be finite".into()));
        }
        Ok(DomainSpec::Torus { n, upsilon })
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        match *self {
            DomainSpec::OpenInterval { n1, n2 } => (n2 - n1 + 1) as usize,
            DomainSpec::Torus { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, DomainSpec::Torus { .. })
    }

    /// Site label of the vector slot `idx` (open intervals carry their own
    /// integer labels; torus sites are `0..n`).
    pub fn site_of_index(&self, idx: usize) -> i64 {
        match *self {
            DomainSpec::OpenInterval { n1, .. } => n1 + idx as i64,
            DomainSpec::Torus { .. } => idx as i64,
        }
    }

    /// Vector slot of a site label, if it lies in the fundamental domain.
    pub fn index_of_site(&self, site: i64) -> Option<usize> {
        match *self {
            DomainSpec::OpenInterval { n1, n2 } => {
                (site >= n1 && site <= n2).then(|| (site - n1) as usize)
            }
            DomainSpec::Torus { n, .. } => (site >= 0 && (site as usize) < n).then(|| site as usize),
        }
    }

    pub fn first_site(&self) -> i64 {
        self.site_of_index(0)
    }

    pub fn last_site(&self) -> i64 {
        self.site_of_index(self.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_interval_indexing() {
        let d = DomainSpec::open(-3, 4).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(d.site_of_index(0), -3);
        assert_eq!(d.site_of_index(7), 4);
        assert_eq!(d.index_of_site(0), Some(3));
        assert_eq!(d.index_of_site(5), None);
        assert!(DomainSpec::open(2, 1).is_err());
    }

    #[test]
    fn torus_indexing() {
        let d = DomainSpec::torus(5, 2.5).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.first_site(), 0);
        assert_eq!(d.last_site(), 4);
        assert!(DomainSpec::torus(0, 1.0).is_err());
    }
}
