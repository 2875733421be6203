use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Instrument family. Closed set of twelve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bass,
    Percussion,
    Strings,
    Brass,
    SynthLead,
    SynthPad,
    Keyboard,
    Guitar,
    Flute,
    Reed,
    Mallet,
    Organ,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Bass,
        Family::Percussion,
        Family::Strings,
        Family::Brass,
        Family::SynthLead,
        Family::SynthPad,
        Family::Keyboard,
        Family::Guitar,
        Family::Flute,
        Family::Reed,
        Family::Mallet,
        Family::Organ,
    ];

    /// The three slots of the mixture experiment.
    pub const MIXTURE_SLOTS: [Family; 3] = [Family::Percussion, Family::Bass, Family::SynthLead];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Bass => "bass",
            Family::Percussion => "percussion",
            Family::Strings => "strings",
            Family::Brass => "brass",
            Family::SynthLead => "synth_lead",
            Family::SynthPad => "synth_pad",
            Family::Keyboard => "keyboard",
            Family::Guitar => "guitar",
            Family::Flute => "flute",
            Family::Reed => "reed",
            Family::Mallet => "mallet",
            Family::Organ => "organ",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown family '{s}'")))
    }
}
