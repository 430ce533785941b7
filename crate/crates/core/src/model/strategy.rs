use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// How the shared encoder is wired to the three task heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Encoder plus a single fully connected head, one task only.
    Stl,
    NonSharedMlp,
    NonSharedVit,
    FullySharedMlp,
    FullySharedVit,
    CascadedVit,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Stl,
        StrategyKind::NonSharedMlp,
        StrategyKind::NonSharedVit,
        StrategyKind::FullySharedMlp,
        StrategyKind::FullySharedVit,
        StrategyKind::CascadedVit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Stl => "stl",
            StrategyKind::NonSharedMlp => "non_shared_mlp",
            StrategyKind::NonSharedVit => "non_shared_vit",
            StrategyKind::FullySharedMlp => "fully_shared_mlp",
            StrategyKind::FullySharedVit => "fully_shared_vit",
            StrategyKind::CascadedVit => "cascaded_vit",
        }
    }

    pub fn is_multi_task(self) -> bool {
        self != StrategyKind::Stl
    }

    pub fn uses_vit_decoder(self) -> bool {
        matches!(
            self,
            StrategyKind::NonSharedVit | StrategyKind::FullySharedVit | StrategyKind::CascadedVit
        )
    }

    /// Table columns: sharing type and decoder kind.
    pub fn table_labels(self) -> (&'static str, &'static str) {
        match self {
            StrategyKind::Stl => ("-", "-"),
            StrategyKind::NonSharedMlp => ("non-fully shared", "MLP"),
            StrategyKind::NonSharedVit => ("non-fully shared", "ViT"),
            StrategyKind::FullySharedMlp => ("fully shared", "MLP"),
            StrategyKind::FullySharedVit => ("fully shared", "ViT"),
            StrategyKind::CascadedVit => ("cascaded", "ViT"),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == key || k.name().replace('_', "") == key)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Detect,
    Landmark,
    Expression,
}

impl Task {
    /// Cascade order.
    pub const ALL: [Task; 3] = [Task::Detect, Task::Landmark, Task::Expression];

    pub fn name(self) -> &'static str {
        match self {
            Task::Detect => "detect",
            Task::Landmark => "landmark",
            Task::Expression => "expression",
        }
    }

    /// Per-frame coordinate count for the regression tasks.
    pub fn coords_per_frame(self) -> Option<usize> {
        match self {
            Task::Detect => Some(4),
            Task::Landmark => Some(10),
            Task::Expression => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}
