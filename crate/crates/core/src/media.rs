//! Modalities, formats and the legal pairs between them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Symbolic,
    Audio,
    Image,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Plain,
    Abc,
    Smf,
    Wav,
    Svg,
    Pdf,
    Json,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Text,
        Modality::Symbolic,
        Modality::Audio,
        Modality::Image,
        Modality::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Symbolic => "symbolic",
            Modality::Audio => "audio",
            Modality::Image => "image",
            Modality::Report => "report",
        }
    }

    pub fn formats(self) -> &'static [Format] {
        match self {
            Modality::Text => &[Format::Plain],
            Modality::Symbolic => &[Format::Abc, Format::Smf],
            Modality::Audio => &[Format::Wav],
            Modality::Image => &[Format::Svg, Format::Pdf],
            Modality::Report => &[Format::Json, Format::Plain],
        }
    }
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Plain => "plain",
            Format::Abc => "abc",
            Format::Smf => "smf",
            Format::Wav => "wav",
            Format::Svg => "svg",
            Format::Pdf => "pdf",
            Format::Json => "json",
        }
    }

    /// HTTP content type used when serving bytes of this format.
    pub fn content_type(self) -> &'static str {
        match self {
            Format::Plain => "text/plain; charset=utf-8",
            Format::Abc => "text/plain; charset=utf-8",
            Format::Smf => "audio/midi",
            Format::Wav => "audio/wav",
            Format::Svg => "image/svg+xml",
            Format::Pdf => "application/pdf",
            Format::Json => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Plain => "txt",
            Format::Abc => "abc",
            Format::Smf => "mid",
            Format::Wav => "wav",
            Format::Svg => "svg",
            Format::Pdf => "pdf",
            Format::Json => "json",
        }
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown modality {s:?}"))
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            Format::Plain,
            Format::Abc,
            Format::Smf,
            Format::Wav,
            Format::Svg,
            Format::Pdf,
            Format::Json,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| format!("unknown format {s:?}"))
    }
}

/// A legal (modality, format) pair. Serialized as `"modality/format"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MediaType {
    pub modality: Modality,
    pub format: Format,
}

impl MediaType {
    pub const TEXT: MediaType = MediaType {
        modality: Modality::Text,
        format: Format::Plain,
    };
    pub const ABC: MediaType = MediaType {
        modality: Modality::Symbolic,
        format: Format::Abc,
    };
    pub const SMF: MediaType = MediaType {
        modality: Modality::Symbolic,
        format: Format::Smf,
    };
    pub const WAV: MediaType = MediaType {
        modality: Modality::Audio,
        format: Format::Wav,
    };
    pub const SVG: MediaType = MediaType {
        modality: Modality::Image,
        format: Format::Svg,
    };
    pub const PDF: MediaType = MediaType {
        modality: Modality::Image,
        format: Format::Pdf,
    };
    pub const JSON: MediaType = MediaType {
        modality: Modality::Report,
        format: Format::Json,
    };
    pub const REPORT_TEXT: MediaType = MediaType {
        modality: Modality::Report,
        format: Format::Plain,
    };

    /// Returns `None` for pairs outside the legal table.
    pub fn new(modality: Modality, format: Format) -> Option<MediaType> {
        modality
            .formats()
            .contains(&format)
            .then_some(MediaType { modality, format })
    }

    pub fn is_legal(&self) -> bool {
        self.modality.formats().contains(&self.format)
    }

    /// Every legal pair, in table order.
    pub fn all() -> Vec<MediaType> {
        Modality::ALL
            .iter()
            .flat_map(|&m| {
                m.formats().iter().map(move |&f| MediaType {
                    modality: m,
                    format: f,
                })
            })
            .collect()
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.modality.as_str(), self.format.as_str())
    }
}

impl FromStr for MediaType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (m, f) = s
            .split_once('/')
            .ok_or_else(|| format!("expected modality/format, got {s:?}"))?;
        let (m, f) = (m.parse()?, f.parse()?);
        MediaType::new(m, f).ok_or_else(|| format!("{s} is not a legal modality/format pair"))
    }
}

impl Serialize for MediaType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MediaType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
