use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::prompt::IM_END;

/// Post-processing applied to raw model output before scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningPolicy {
    /// Keep the raw output untouched.
    None,
    /// Cut at the first `<|im_end|>`, trim, then cut at the first blank line.
    #[default]
    Default,
    /// Cut at the first `<|im_end|>`, trim, keep the first line only.
    FirstLine,
}

impl CleaningPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            CleaningPolicy::None => "none",
            CleaningPolicy::Default => "default",
            CleaningPolicy::FirstLine => "first_line",
        }
    }
}

impl fmt::Display for CleaningPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CleaningPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(CleaningPolicy::None),
            "default" => Ok(CleaningPolicy::Default),
            "first_line" => Ok(CleaningPolicy::FirstLine),
            other => Err(format!("unknown cleaning policy `{other}`")),
        }
    }
}

pub fn clean_hypothesis(raw: &str, policy: CleaningPolicy) -> String {
    if policy == CleaningPolicy::None {
        return raw.to_owned();
    }
    let head = raw.find(IM_END).map_or(raw, |i| &raw[..i]).trim();
    match policy {
        CleaningPolicy::FirstLine => head.lines().next().unwrap_or("").trim().to_owned(),
        _ => {
            let mut end = head.len();
            let mut offset = 0;
            for line in head.split_inclusive('\n') {
                if line.trim().is_empty() {
                    end = offset;
                    break;
                }
                offset += line.len();
            }
            head[..end].trim_end().to_owned()
        }
    }
}
