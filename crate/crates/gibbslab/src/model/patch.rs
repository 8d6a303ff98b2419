//! Patch families: the index sets a site-redraw sweep may update.
//!
//! A family is a list of site sets with integer multiplicities. Writing
//! `nu(k)` for the number of family members containing site `k` (counted
//! with multiplicity), the family records
//!
//! * `t = min_k nu(k)` — every site is refreshed at least `t` times per
//!   full sweep,
//! * `v = max_k nu(k)` — no site is refreshed more than `v` times,
//! * `total = sum of multiplicities` — the number of members drawn from
//!   when a sweep picks patches uniformly.
//!
//! Families must cover every site (`t >= 1`); empty families and empty
//! patches are rejected.

use super::ModelError;

/// A nonempty set of sites, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    sites: Vec<usize>,
}

impl Patch {
    /// Builds a patch from arbitrary site order; duplicates are merged.
    pub fn new(mut sites: Vec<usize>) -> Result<Self, ModelError> {
        if sites.is_empty() {
            return Err(ModelError::EmptyPatch { index: 0 });
        }
        sites.sort_unstable();
        sites.dedup();
        Ok(Patch { sites })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    /// Sites of `0..n` not in the patch, in increasing order.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|k| !self.contains(*k)).collect()
    }
}

/// A validated patch family over `n` sites.
#[derive(Debug, Clone)]
pub struct PatchFamily {
    n: usize,
    patches: Vec<Patch>,
    multiplicities: Vec<u32>,
    coverage: Vec<u32>,
    total: u32,
    min_coverage: u32,
    max_coverage: u32,
    max_patch_size: usize,
}

impl PatchFamily {
    pub fn site_count(&self) -> usize {
        self.n
    }

    /// Distinct members, paired with [`multiplicities`](Self::multiplicities).
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    /// `nu(k)`: how many members contain site `k`, with multiplicity.
    pub fn coverage(&self, site: usize) -> u32 {
        self.coverage[site]
    }

    /// `N`: total family size counted with multiplicity.
    pub fn total(&self) -> u32 {
        self.total
    }

    /// `t = min_k nu(k)`.
    pub fn min_coverage(&self) -> u32 {
        self.min_coverage
    }

    /// `v = max_k nu(k)`.
    pub fn max_coverage(&self) -> u32 {
        self.max_coverage
    }

    /// The largest member cardinality (not `v`; see
    /// [`max_coverage`](Self::max_coverage)).
    pub fn max_patch_size(&self) -> usize {
        self.max_patch_size
    }

    /// Iterates `(patch, multiplicity)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&Patch, u32)> {
        self.patches.iter().zip(self.multiplicities.iter().copied())
    }

    /// Selects the member at `index` when members are laid out with
    /// multiplicity (member `j` occupies `mult(j)` consecutive slots).
    /// Used to draw a patch uniformly from the family.
    pub fn member_at(&self, index: u32) -> &Patch {
        &self.patches[self.member_index_at(index)]
    }

    /// Like [`member_at`](Self::member_at), but returns the member's
    /// index into [`patches`](Self::patches).
    pub fn member_index_at(&self, index: u32) -> usize {
        debug_assert!(index < self.total);
        let mut rem = index;
        for (pos, mult) in self.multiplicities.iter().copied().enumerate() {
            if rem < mult {
                return pos;
            }
            rem -= mult;
        }
        unreachable!("index below total must land in a member")
    }
}

/// Validates a list of `(sites, multiplicity)` pairs into a family.
///
/// Errors: empty family, empty patch, out-of-range site, zero
/// multiplicity, or a site covered by no patch.
pub fn build_patch_family(
    n: usize,
    members: &[(Vec<usize>, u32)],
) -> Result<PatchFamily, ModelError> {
    if members.is_empty() {
        return Err(ModelError::EmptyFamily);
    }
    let mut patches = Vec::with_capacity(members.len());
    let mut multiplicities = Vec::with_capacity(members.len());
    let mut coverage = vec![0u32; n];
    let mut total: u32 = 0;
    for (index, (sites, mult)) in members.iter().enumerate() {
        if sites.is_empty() {
            return Err(ModelError::EmptyPatch { index });
        }
        if *mult == 0 {
            return Err(ModelError::ZeroMultiplicity { index });
        }
        let patch = Patch::new(sites.clone())?;
        for &site in patch.sites() {
            if site >= n {
                return Err(ModelError::SiteOutOfRange { site, n });
            }
            coverage[site] += mult;
        }
        total += mult;
        patches.push(patch);
        multiplicities.push(*mult);
    }
    for (site, &nu) in coverage.iter().enumerate() {
        if nu == 0 {
            return Err(ModelError::UncoveredSite { site });
        }
    }
    let min_coverage = coverage.iter().copied().min().expect("n >= 1 checked via coverage");
    let max_coverage = coverage.iter().copied().max().expect("n >= 1 checked via coverage");
    let max_patch_size = patches.iter().map(Patch::len).max().expect("nonempty");
    Ok(PatchFamily {
        n,
        patches,
        multiplicities,
        coverage,
        total,
        min_coverage,
        max_coverage,
        max_patch_size,
    })
}

/// Convenience: the family of all singletons `{0}, ..., {n-1}`, each once.
pub fn singleton_family(n: usize) -> PatchFamily {
    let members: Vec<(Vec<usize>, u32)> = (0..n).map(|k| (vec![k], 1)).collect();
    build_patch_family(n, &members).expect("singletons always cover")
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singletons_have_unit_everything() {
        let fam = singleton_family(4);
        assert_eq!(fam.total(), 4);
        assert_eq!(fam.min_coverage(), 1);
        assert_eq!(fam.max_patch_size(), 1);
        for k in 0..4 {
            assert_eq!(fam.coverage(k), 1);
        }
    }

    #[test]
    fn overlapping_pairs_double_count() {
        // {0,1}, {1,2}, {2,0} over 3 sites: every site in exactly 2 members.
        let fam = build_patch_family(3, &[(vec![0, 1], 1), (vec![1, 2], 1), (vec![2, 0], 1)])
            .expect("covers");
        assert_eq!(fam.total(), 3);
        assert_eq!(fam.min_coverage(), 2);
        assert_eq!(fam.max_patch_size(), 2);
    }

    #[test]
    fn multiplicity_scales_coverage_and_total() {
        let fam = build_patch_family(2, &[(vec![0], 3), (vec![1], 1), (vec![0, 1], 2)])
            .expect("covers");
        assert_eq!(fam.total(), 6);
        assert_eq!(fam.coverage(0), 5);
        assert_eq!(fam.coverage(1), 3);
        assert_eq!(fam.min_coverage(), 3);
        assert_eq!(fam.max_coverage(), 5);
    }

    #[test]
    fn uncovered_site_is_rejected() {
        let err = build_patch_family(3, &[(vec![0, 1], 1)]).unwrap_err();
        assert!(matches!(err, ModelError::UncoveredSite { site: 2 }));
    }

    #[test]
    fn empty_family_is_rejected() {
        assert!(matches!(
            build_patch_family(3, &[]).unwrap_err(),
            ModelError::EmptyFamily
        ));
    }

    #[test]
    fn empty_patch_is_rejected() {
        let err = build_patch_family(2, &[(vec![0], 1), (vec![], 1)]).unwrap_err();
        assert!(matches!(err, ModelError::EmptyPatch { index: 1 }));
    }

    #[test]
    fn member_at_respects_multiplicity_blocks() {
        let fam = build_patch_family(2, &[(vec![0], 2), (vec![1], 1)]).expect("covers");
        assert_eq!(fam.member_at(0).sites(), &[0]);
        assert_eq!(fam.member_at(1).sites(), &[0]);
        assert_eq!(fam.member_at(2).sites(), &[1]);
    }

    #[test]
    fn patch_complement_is_sorted_remainder() {
        let p = Patch::new(vec![3, 1]).unwrap();
        assert_eq!(p.sites(), &[1, 3]);
        assert_eq!(p.complement(5), vec![0, 2, 4]);
    }
}
