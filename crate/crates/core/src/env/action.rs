//! The discrete action space: a translation choice paired with a
//! rotation choice, plus the metabolic cost table.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Translation {
    Forward,
    Backward,
    Still,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    Clockwise,
    Counterclockwise,
    Still,
}

pub const TRANSLATIONS: [Translation; 3] = [Translation::Forward, Translation::Backward, Translation::Still];
pub const ROTATIONS: [Rotation; 3] = [Rotation::Clockwise, Rotation::Counterclockwise, Rotation::Still];

/// Width of the concatenated one-hot encoding (3 translation + 3 rotation).
pub const ONE_HOT_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentAction {
    pub translation: Translation,
    pub rotation: Rotation,
}

impl AgentAction {
    pub const STILL: AgentAction = AgentAction { translation: Translation::Still, rotation: Rotation::Still };

    pub fn new(translation: Translation, rotation: Rotation) -> Self {
        Self { translation, rotation }
    }

    /// (translation index, rotation index), each in 0..3.
    pub fn indices(&self) -> (usize, usize) {
        let t = TRANSLATIONS.iter().position(|&x| x == self.translation).unwrap();
        let r = ROTATIONS.iter().position(|&x| x == self.rotation).unwrap();
        (t, r)
    }

    pub fn from_indices(t: usize, r: usize) -> Option<Self> {
        Some(Self { translation: *TRANSLATIONS.get(t)?, rotation: *ROTATIONS.get(r)? })
    }

    /// Concatenated one-hot encoding with exactly one bit set per sub-action.
    pub fn one_hot(&self) -> [f32; ONE_HOT_DIM] {
        let (t, r) = self.indices();
        let mut v = [0.0; ONE_HOT_DIM];
        v[t] = 1.0;
        v[3 + r] = 1.0;
        v
    }

    /// All nine action combinations, in a fixed order.
    pub fn all() -> impl Iterator<Item = AgentAction> {
        TRANSLATIONS
            .iter()
            .flat_map(|&t| ROTATIONS.iter().map(move |&r| AgentAction::new(t, r)))
    }
}

/// Metabolic cost of a combined action: the translation and rotation
/// costs add. Always non-positive.
pub fn metabolic_cost(action: AgentAction) -> f64 {
    let t = match action.translation {
        Translation::Forward => -0.001,
        Translation::Backward => -0.01,
        Translation::Still => 0.0,
    };
    let r = match action.rotation {
        Rotation::Clockwise | Rotation::Counterclockwise => -0.0005,
        Rotation::Still => 0.0,
    };
    t + r
}
