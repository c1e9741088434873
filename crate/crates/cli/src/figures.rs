//! Canned configurations, one per reproduced figure.

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Field,
    Otfs,
    Optimize,
    Analyze,
    Sweep,
}

pub struct Figure {
    pub id: u32,
    pub config: &'static str,
    pub stages: &'static [Stage],
}

pub const FIGURES: &[Figure] = &[
    Figure { id: 1, config: include_str!("../../../configs/fig01.toml"), stages: &[Stage::Otfs] },
    Figure { id: 2, config: include_str!("../../../configs/fig02.toml"), stages: &[Stage::Analyze] },
    Figure { id: 3, config: include_str!("../../../configs/fig03.toml"), stages: &[Stage::Optimize] },
    Figure { id: 4, config: include_str!("../../../configs/fig04.toml"), stages: &[Stage::Optimize] },
    Figure { id: 5, config: include_str!("../../../configs/fig05.toml"), stages: &[Stage::Analyze] },
    Figure { id: 6, config: include_str!("../../../configs/fig06.toml"), stages: &[Stage::Analyze] },
    Figure { id: 7, config: include_str!("../../../configs/fig07.toml"), stages: &[Stage::Optimize, Stage::Analyze] },
    Figure { id: 8, config: include_str!("../../../configs/fig08.toml"), stages: &[Stage::Sweep] },
    Figure { id: 9, config: include_str!("../../../configs/fig09.toml"), stages: &[Stage::Optimize] },
    Figure { id: 10, config: include_str!("../../../configs/fig10.toml"), stages: &[Stage::Optimize] },
    Figure { id: 11, config: include_str!("../../../configs/fig11.toml"), stages: &[Stage::Optimize] },
    Figure { id: 12, config: include_str!("../../../configs/fig12.toml"), stages: &[Stage::Analyze] },
    Figure { id: 13, config: include_str!("../../../configs/fig13.toml"), stages: &[Stage::Analyze] },
];

pub fn valid_ids() -> String {
    FIGURES.iter().map(|f| f.id.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn lookup(id: u32) -> Result<(&'static Figure, RunConfig), CliError> {
    let figure = FIGURES
        .iter()
        .find(|f| f.id == id)
        .ok_or_else(|| CliError::Config(format!("unknown figure id {id}; valid ids: {}", valid_ids())))?;
    Ok((figure, RunConfig::parse(figure.config)?))
}
