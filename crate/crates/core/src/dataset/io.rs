//! JSON-lines dataset files.
//!
//! Line 1 is a header `{"universe":[{"id","category","name"}..],"rho":ρ}`,
//! followed by one `{"type":"job",..}` line per posting and one
//! `{"type":"profile",..}` line per candidate. UTF-8, LF line endings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_fraction, CandidateProfile, DatasetError, JobPosting, MarketDataset, Skill, SkillUniverse,
};
use crate::bits::FeatureId;

#[derive(Serialize, Deserialize)]
struct Header {
    universe: Vec<Skill>,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Job {
        id: u32,
        required: Vec<FeatureId>,
    },
    Profile {
        id: u32,
        skills: Vec<FeatureId>,
        label: u32,
    },
}

pub fn write_dataset<W: Write>(dataset: &MarketDataset, mut out: W) -> Result<(), DatasetError> {
    let header = Header {
        universe: dataset.universe.skills().to_vec(),
        rho: dataset.fulfillment_fraction,
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for job in &dataset.jobs {
        let rec = Record::Job {
            id: job.id,
            required: job.required.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    for p in &dataset.profiles {
        let rec = Record::Profile {
            id: p.id,
            skills: p.skills.clone(),
            label: p.label,
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &MarketDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

/// Parses a dataset and re-derives every label; a stored label that
/// disagrees with the jobs is an [`DatasetError::Integrity`] error.
pub fn read_dataset<R: BufRead>(input: R) -> Result<MarketDataset, DatasetError> {
    let mut lines = input.lines().enumerate();
    let parse_err = |line: usize, message: String| DatasetError::Parse {
        line: line + 1,
        message,
    };

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| parse_err(0, e.to_string()))?;
    check_fraction(header.rho)?;
    let universe = SkillUniverse::new(header.universe).map_err(|e| parse_err(0, e.to_string()))?;
    let check_ids = |line: usize, what: &str, ids: &[FeatureId]| match ids
        .iter()
        .find(|&&id| !universe.contains(id))
    {
        Some(bad) => Err(parse_err(
            line,
            format!("{what} references unknown skill {bad}"),
        )),
        None => Ok(()),
    };

    let mut jobs = Vec::new();
    let mut profiles = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| parse_err(i, e.to_string()))? {
            Record::Job { id, required } => {
                check_ids(i, &format!("job {id}"), &required)?;
                jobs.push(JobPosting::new(id, required).map_err(|e| parse_err(i, e.to_string()))?);
            }
            Record::Profile {
                id,
                mut skills,
                label,
            } => {
                check_ids(i, &format!("profile {id}"), &skills)?;
                skills.sort_unstable();
                skills.dedup();
                profiles.push(CandidateProfile { id, skills, label });
            }
        }
    }

    let dataset = MarketDataset {
        universe,
        jobs,
        profiles,
        fulfillment_fraction: header.rho,
    };
    dataset.verify_labels()?;
    Ok(dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MarketDataset, DatasetError> {
    read_dataset(BufReader::new(File::open(path)?))
}
