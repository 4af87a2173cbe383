//! The six programming languages the pipeline translates between.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A supported programming language.
///
/// The declaration order is the canonical order used for task enumeration
/// and for report axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgrammingLanguage {
    Python,
    Cpp,
    Java,
    Javascript,
    Go,
    Rust,
}

impl ProgrammingLanguage {
    pub const ALL: [ProgrammingLanguage; 6] = [
        ProgrammingLanguage::Python,
        ProgrammingLanguage::Cpp,
        ProgrammingLanguage::Java,
        ProgrammingLanguage::Javascript,
        ProgrammingLanguage::Go,
        ProgrammingLanguage::Rust,
    ];

    /// Stable identifier used in file names, CLI flags and serialized records.
    pub fn id(self) -> &'static str {
        match self {
            Self::Python => "python",
            Self::Cpp => "cpp",
            Self::Java => "java",
            Self::Javascript => "javascript",
            Self::Go => "go",
            Self::Rust => "rust",
        }
    }

    /// Human-readable name, as it appears in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Python => "Python",
            Self::Cpp => "C++",
            Self::Java => "Java",
            Self::Javascript => "JavaScript",
            Self::Go => "Go",
            Self::Rust => "Rust",
        }
    }

    pub fn file_extension(self) -> &'static str {
        match self {
            Self::Python => "py",
            Self::Cpp => "cpp",
            Self::Java => "java",
            Self::Javascript => "js",
            Self::Go => "go",
            Self::Rust => "rs",
        }
    }

    /// Info-string tag written on markdown fences.
    pub fn fence_tag(self) -> &'static str {
        self.id()
    }

    /// Id of the toolchain adapter that builds and runs this language.
    pub fn toolchain(self) -> &'static str {
        self.id()
    }

    /// Recognizes the usual spellings models put on code fences.
    pub fn from_fence_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "python" | "py" | "python3" => Some(Self::Python),
            "cpp" | "c++" | "cc" | "cxx" | "hpp" => Some(Self::Cpp),
            "java" => Some(Self::Java),
            "javascript" | "js" | "node" | "nodejs" | "mjs" => Some(Self::Javascript),
            "go" | "golang" => Some(Self::Go),
            "rust" | "rs" => Some(Self::Rust),
            _ => None,
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.file_extension() == ext)
    }
}

impl fmt::Display for ProgrammingLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ProgrammingLanguage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.id() == s)
            .or_else(|| Self::from_fence_tag(s))
            .ok_or_else(|| Error::UnknownLanguage(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn six_unique_members() {
        let ids: HashSet<_> = ProgrammingLanguage::ALL.iter().map(|l| l.id()).collect();
        assert_eq!(ids.len(), 6);
        let exts: HashSet<_> = ProgrammingLanguage::ALL.iter().map(|l| l.file_extension()).collect();
        assert_eq!(exts.len(), 6);
    }

    #[test]
    fn parse_round_trip() {
        for lang in ProgrammingLanguage::ALL {
            assert_eq!(lang.id().parse::<ProgrammingLanguage>().unwrap(), lang);
            assert_eq!(ProgrammingLanguage::from_extension(lang.file_extension()), Some(lang));
        }
        assert_eq!("c++".parse::<ProgrammingLanguage>().unwrap(), ProgrammingLanguage::Cpp);
        assert!("cobol".parse::<ProgrammingLanguage>().is_err());
    }
}
