use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{
    check_fraction, label_all, CandidateProfile, Category, DatasetError, JobPosting, Skill,
    SkillUniverse,
};
use crate::bits::{BinaryVector, FeatureId};

/// Number of skills per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseSizes {
    pub competency: usize,
    pub study: usize,
    pub study_area: usize,
    pub language: usize,
}

impl UniverseSizes {
    pub fn total(&self) -> usize {
        self.competency + self.study + self.study_area + self.language
    }
}

impl Default for UniverseSizes {
    /// 5000 features: 4450 competencies, 500 studies, 50 languages.
    fn default() -> Self {
        Self {
            competency: 4450,
            study: 500,
            study_area: 0,
            language: 50,
        }
    }
}

const COMPETENCY_WORDS: &[&str] = &[
    "python",
    "sql",
    "cloud",
    "welding",
    "accounting",
    "forklift",
    "nursing",
    "sales",
    "leadership",
    "logistics",
    "excel",
    "carpentry",
    "marketing",
    "networking",
    "java",
    "cooking",
    "driving",
    "planning",
    "security",
    "design",
];
const STUDY_WORDS: &[&str] = &[
    "bachelor",
    "master",
    "doctorate",
    "diploma",
    "certificate",
    "associate",
];
const AREA_WORDS: &[&str] = &[
    "it",
    "health",
    "engineering",
    "trade",
    "education",
    "finance",
    "arts",
    "law",
];
const LANGUAGE_WORDS: &[&str] = &["dutch", "french", "english", "german", "spanish"];

/// Builds the skill taxonomy. Ids are assigned category by category; the seed
/// only affects display names.
pub fn generate_universe(sizes: UniverseSizes, seed: u64) -> Result<SkillUniverse, DatasetError> {
    if sizes.total() == 0 {
        return Err(DatasetError::EmptyUniverse);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = [
        (
            Category::Competency,
            sizes.competency,
            "competency",
            COMPETENCY_WORDS,
        ),
        (Category::Study, sizes.study, "study", STUDY_WORDS),
        (Category::StudyArea, sizes.study_area, "area", AREA_WORDS),
        (
            Category::Language,
            sizes.language,
            "language",
            LANGUAGE_WORDS,
        ),
    ];
    let mut skills = Vec::with_capacity(sizes.total());
    for (category, n, prefix, words) in groups {
        for i in 0..n {
            let word = words.choose(&mut rng).expect("word lists are non-empty");
            skills.push(Skill {
                id: skills.len() as FeatureId,
                category,
                name: format!("{prefix}:{word}-{i}"),
            });
        }
    }
    SkillUniverse::new(skills)
}

/// Zipf-like popularity over skills: a seeded permutation assigns each skill
/// a rank r (1-based) and weight 1/r.
pub fn popularity_weights(n_skills: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_skills).collect();
    order.shuffle(&mut rng);
    let mut weights = vec![0.0; n_skills];
    for (rank, &skill) in order.iter().enumerate() {
        weights[skill] = 1.0 / (rank + 1) as f64;
    }
    weights
}

/// Sizes drawn from a Poisson truncated below at 1 and above at `max`, with
/// the rate chosen so the lower-truncated mean matches `mean`.
struct SetSize {
    poisson: Option<Poisson<f64>>,
    max: usize,
}

impl SetSize {
    fn new(mean: f64, max: usize) -> Result<Self, DatasetError> {
        if mean.is_nan() || mean < 1.0 {
            return Err(DatasetError::InvalidParameter(format!(
                "mean set size must be at least 1, got {mean}"
            )));
        }
        if mean > max as f64 {
            return Err(DatasetError::InfeasibleMean {
                mean,
                universe: max,
            });
        }
        let poisson = if mean == 1.0 {
            None
        } else {
            let rate = zero_truncated_rate(mean);
            Some(Poisson::new(rate).map_err(|e| DatasetError::InvalidParameter(e.to_string()))?)
        };
        Ok(Self { poisson, max })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let Some(poisson) = &self.poisson else {
            return 1;
        };
        loop {
            let k = poisson.sample(rng) as usize;
            if k >= 1 && k <= self.max {
                return k;
            }
        }
    }
}

/// Solves rate / (1 - e^-rate) = mean for mean > 1 by bisection.
fn zero_truncated_rate(mean: f64) -> f64 {
    let f = |rate: f64| rate / (1.0 - (-rate).exp()) - mean;
    let (mut lo, mut hi) = (1e-9, mean);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `k` distinct indices drawn with probability proportional to `weights`,
/// returned ascending.
fn weighted_distinct<R: Rng>(
    rng: &mut R,
    index: &WeightedIndex<f64>,
    n: usize,
    k: usize,
) -> Vec<FeatureId> {
    if k >= n {
        return (0..n as FeatureId).collect();
    }
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k {
        let id = index.sample(rng) as FeatureId;
        if !picked.contains(&id) {
            picked.push(id);
        }
    }
    picked.sort_unstable();
    picked
}

/// Job postings whose requirement sets follow the universe's popularity
/// weights (seeded from `seed`).
pub fn generate_market(
    universe: &SkillUniverse,
    n_jobs: usize,
    skills_per_job_mean: f64,
    seed: u64,
) -> Result<Vec<JobPosting>, DatasetError> {
    if n_jobs == 0 {
        return Err(DatasetError::InvalidParameter(
            "n_jobs must be at least 1".into(),
        ));
    }
    let n = universe.len();
    let size = SetSize::new(skills_per_job_mean, n)?;
    let weights = popularity_weights(n, seed);
    let index = WeightedIndex::new(&weights).expect("weights are positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n_jobs)
        .map(|j| {
            let k = size.sample(&mut rng);
            JobPosting::new(j as u32, weighted_distinct(&mut rng, &index, n, k))
        })
        .collect()
}

/// Candidate profiles whose skills are drawn in proportion to market demand
/// (occurrences across `jobs`, plus one), so in-demand skills are also the
/// most commonly held ones. Labels come from [`super::job_reach`].
pub fn generate_profiles(
    universe: &SkillUniverse,
    jobs: &[JobPosting],
    n_profiles: usize,
    skills_per_profile_mean: f64,
    fulfillment_fraction: f64,
    seed: u64,
) -> Result<Vec<CandidateProfile>, DatasetError> {
    check_fraction(fulfillment_fraction)?;
    if n_profiles == 0 {
        return Err(DatasetError::InvalidParameter(
            "n_profiles must be at least 1".into(),
        ));
    }
    let n = universe.len();
    let size = SetSize::new(skills_per_profile_mean, n)?;
    let mut demand = vec![1.0f64; n];
    for job in jobs {
        for &s in &job.required {
            if let Some(d) = demand.get_mut(s as usize) {
                *d += 1.0;
            }
        }
    }
    let index = WeightedIndex::new(&demand).expect("weights are positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let skill_sets: Vec<Vec<FeatureId>> = (0..n_profiles)
        .map(|_| {
            let k = size.sample(&mut rng);
            weighted_distinct(&mut rng, &index, n, k)
        })
        .collect();
    let features: Vec<BinaryVector> = skill_sets
        .iter()
        .map(|s| BinaryVector::from_active(n, s.iter().copied()))
        .collect();
    let labels = label_all(&features, jobs, fulfillment_fraction)?;
    Ok(skill_sets
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (skills, label))| CandidateProfile {
            id: i as u32,
            skills,
            label,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::job_reach;

    fn sizes(c: usize, s: usize, a: usize, l: usize) -> UniverseSizes {
        UniverseSizes {
            competency: c,
            study: s,
            study_area: a,
            language: l,
        }
    }

    #[test]
    fn default_universe_has_5000_skills() {
        let u = generate_universe(UniverseSizes::default(), 1).unwrap();
        assert_eq!(u.len(), 5000);
        assert_eq!(u.count(Category::Competency), 4450);
        assert_eq!(u.count(Category::Study), 500);
        assert_eq!(u.count(Category::Language), 50);
    }

    #[test]
    fn single_skill_universe() {
        let u = generate_universe(sizes(1, 0, 0, 0), 3).unwrap();
        assert_eq!(u.len(), 1);
        assert_eq!(u.skills()[0].id, 0);
        assert_eq!(u.skills()[0].category, Category::Competency);
    }

    #[test]
    fn category_blocks_are_contiguous() {
        let u = generate_universe(sizes(3, 2, 1, 1), 3).unwrap();
        let cats: Vec<_> = u.skills().iter().map(|s| s.category).collect();
        use Category::*;
        assert_eq!(
            cats,
            vec![Competency, Competency, Competency, Study, Study, StudyArea, Language]
        );
        assert!(u
            .skills()
            .iter()
            .enumerate()
            .all(|(i, s)| s.id as usize == i));
    }

    #[test]
    fn empty_universe_rejected() {
        assert!(matches!(
            generate_universe(sizes(0, 0, 0, 0), 0),
            Err(DatasetError::EmptyUniverse)
        ));
    }

    #[test]
    fn benchmark_market_hits_target_mean() {
        let u = generate_universe(UniverseSizes::default(), 1).unwrap();
        let jobs = generate_market(&u, 10_000, 11.04, 2).unwrap();
        assert_eq!(jobs.len(), 10_000);
        let mean = jobs.iter().map(|j| j.required.len()).sum::<usize>() as f64 / 10_000.0;
        assert!((mean - 11.04).abs() <= 0.5, "mean {mean}");
    }

    #[test]
    fn one_skill_market() {
        let u = generate_universe(sizes(1, 0, 0, 0), 0).unwrap();
        let jobs = generate_market(&u, 5, 1.0, 9).unwrap();
        assert_eq!(jobs.len(), 5);
        assert!(jobs.iter().all(|j| j.required == vec![0]));
    }

    #[test]
    fn small_market_bounds() {
        let u = generate_universe(sizes(3, 2, 1, 1), 0).unwrap();
        let jobs = generate_market(&u, 3, 2.0, 4).unwrap();
        assert_eq!(jobs.len(), 3);
        for j in &jobs {
            assert!(!j.required.is_empty());
            assert!(j.required.iter().all(|&s| s < 7));
        }
    }

    #[test]
    fn infeasible_mean_rejected() {
        let u = generate_universe(sizes(3, 0, 0, 0), 0).unwrap();
        assert!(matches!(
            generate_market(&u, 3, 4.0, 0),
            Err(DatasetError::InfeasibleMean { .. })
        ));
        assert!(matches!(
            generate_profiles(&u, &[], 3, 4.0, 1.0, 0),
            Err(DatasetError::InfeasibleMean { .. })
        ));
    }

    #[test]
    fn truncated_rate_matches_mean() {
        for mean in [1.5, 2.0, 11.04, 30.0] {
            let r = zero_truncated_rate(mean);
            assert!((r / (1.0 - (-r).exp()) - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn profiles_are_labelled_by_reach() {
        let u = generate_universe(sizes(40, 5, 0, 5), 0).unwrap();
        let jobs = generate_market(&u, 200, 3.0, 1).unwrap();
        let profiles = generate_profiles(&u, &jobs, 1000, 11.04, 1.0, 2).unwrap();
        assert_eq!(profiles.len(), 1000);
        for p in profiles.iter().take(50) {
            let x = p.features(u.len());
            assert_eq!(job_reach(&x, &jobs, 1.0).unwrap(), p.label);
        }
    }

    #[test]
    fn single_profile_single_skill() {
        let u = generate_universe(sizes(1, 0, 0, 0), 0).unwrap();
        let jobs = generate_market(&u, 1, 1.0, 0).unwrap();
        let p = generate_profiles(&u, &jobs, 1, 1.0, 1.0, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].skills.iter().all(|&s| s == 0));
        assert_eq!(p[0].label, 1);
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let u = generate_universe(sizes(50, 5, 2, 3), 8).unwrap();
        let a = generate_market(&u, 40, 4.0, 5).unwrap();
        let b = generate_market(&u, 40, 4.0, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_market(&u, 40, 4.0, 6).unwrap();
        assert_ne!(a, c);
    }
}
