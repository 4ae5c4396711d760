//! Synthetic skills market: skill taxonomy, job postings, candidate profiles
//! and the job-reach label that ties them together.

mod generate;
mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinaryVector, FeatureId};

pub use generate::{
    generate_market, generate_profiles, generate_universe, popularity_weights, UniverseSizes,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("skill universe must contain at least one skill")]
    EmptyUniverse,
    #[error("mean set size {mean} is infeasible for a universe of {universe} skills")]
    InfeasibleMean { mean: f64, universe: usize },
    #[error("fulfillment fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("profile {profile_id}: stored label {stored} but skills reach {computed} jobs")]
    Integrity {
        profile_id: u32,
        stored: u32,
        computed: u32,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Competency,
    Study,
    StudyArea,
    Language,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub id: FeatureId,
    pub category: Category,
    pub name: String,
}

/// The feature space. Skill ids are contiguous from 0 and grouped by
/// category in the order competency, study, study area, language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillUniverse {
    skills: Vec<Skill>,
}

impl SkillUniverse {
    /// Validates that ids are `0..n` in order.
    pub fn new(skills: Vec<Skill>) -> Result<Self, DatasetError> {
        if skills.is_empty() {
            return Err(DatasetError::EmptyUniverse);
        }
        for (i, s) in skills.iter().enumerate() {
            if s.id as usize != i {
                return Err(DatasetError::InvalidParameter(format!(
                    "skill at position {i} has id {}; ids must be contiguous from 0",
                    s.id
                )));
            }
        }
        Ok(Self { skills })
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn get(&self, id: FeatureId) -> Option<&Skill> {
        self.skills.get(id as usize)
    }

    pub fn count(&self, category: Category) -> usize {
        self.skills
            .iter()
            .filter(|s| s.category == category)
            .count()
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        (id as usize) < self.skills.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobPosting {
    pub id: u32,
    /// Required skills, ascending and duplicate-free.
    pub required: Vec<FeatureId>,
}

impl JobPosting {
    /// Sorts and deduplicates `required`; rejects an empty requirement set.
    pub fn new(id: u32, mut required: Vec<FeatureId>) -> Result<Self, DatasetError> {
        required.sort_unstable();
        required.dedup();
        if required.is_empty() {
            return Err(DatasetError::InvalidParameter(format!(
                "job {id} has no required skills"
            )));
        }
        Ok(Self { id, required })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub id: u32,
    /// Held skills, ascending and duplicate-free.
    pub skills: Vec<FeatureId>,
    /// Job reach of `skills` against the dataset's jobs.
    pub label: u32,
}

impl CandidateProfile {
    pub fn features(&self, dim: usize) -> BinaryVector {
        BinaryVector::from_active(dim, self.skills.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    pub universe: SkillUniverse,
    pub jobs: Vec<JobPosting>,
    pub profiles: Vec<CandidateProfile>,
    /// Minimum share of a job's requirements a profile must cover for the
    /// job to count towards its reach.
    pub fulfillment_fraction: f64,
}

impl MarketDataset {
    pub fn dim(&self) -> usize {
        self.universe.len()
    }

    pub fn features(&self) -> Vec<BinaryVector> {
        self.profiles
            .iter()
            .map(|p| p.features(self.dim()))
            .collect()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.profiles.iter().map(|p| p.label).collect()
    }

    /// Recomputes every label and reports the first mismatch.
    pub fn verify_labels(&self) -> Result<(), DatasetError> {
        let dim = self.dim();
        let computed = label_all(
            self.profiles
                .iter()
                .map(|p| p.features(dim))
                .collect::<Vec<_>>()
                .as_slice(),
            &self.jobs,
            self.fulfillment_fraction,
        )?;
        for (p, c) in self.profiles.iter().zip(computed) {
            if p.label != c {
                return Err(DatasetError::Integrity {
                    profile_id: p.id,
                    stored: p.label,
                    computed: c,
                });
            }
        }
        Ok(())
    }
}

pub fn check_fraction(fulfillment_fraction: f64) -> Result<(), DatasetError> {
    if fulfillment_fraction > 0.0 && fulfillment_fraction <= 1.0 {
        Ok(())
    } else {
        Err(DatasetError::InvalidFraction(fulfillment_fraction))
    }
}

/// Number of jobs whose requirements are covered by `skills` to at least
/// `fulfillment_fraction`.
pub fn job_reach(
    skills: &BinaryVector,
    jobs: &[JobPosting],
    fulfillment_fraction: f64,
) -> Result<u32, DatasetError> {
    check_fraction(fulfillment_fraction)?;
    Ok(reach_unchecked(skills, jobs, fulfillment_fraction))
}

fn reach_unchecked(skills: &BinaryVector, jobs: &[JobPosting], rho: f64) -> u32 {
    jobs.iter()
        .filter(|job| {
            let covered = job
                .required
                .iter()
                .filter(|&&id| (id as usize) < skills.dim() && skills.get(id))
                .count();
            covered as f64 / job.required.len() as f64 >= rho
        })
        .count() as u32
}

/// Labels many profiles in parallel; output order follows `profiles`.
pub fn label_all(
    profiles: &[BinaryVector],
    jobs: &[JobPosting],
    fulfillment_fraction: f64,
) -> Result<Vec<u32>, DatasetError> {
    check_fraction(fulfillment_fraction)?;
    Ok(profiles
        .par_iter()
        .map(|x| reach_unchecked(x, jobs, fulfillment_fraction))
        .collect())
}
