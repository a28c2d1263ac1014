//! Platform grouping file: `kind,id,platform`.
//!
//! `token` rows assign a token to a platform; its holders are that
//! platform's users. `wallet` rows mark a platform treasury; treasury
//! wallets never count as users. Without a file every token belongs to a
//! single platform named [`ALL`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use crate::{CliError, Result};

pub const ALL: &str = "all";
const HEADER: [&str; 3] = ["kind", "id", "platform"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Groups {
    tokens: BTreeMap<String, String>,
    treasuries: BTreeMap<String, String>,
    /// False when every token falls into [`ALL`].
    explicit: bool,
}

impl Groups {
    pub fn all() -> Self {
        Groups::default()
    }

    pub fn parse<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let header = reader
            .headers()
            .map_err(|e| CliError::Input(format!("group file: {e}")))?
            .clone();
        if header.iter().map(|h| h.trim_start_matches('\u{feff}')).ne(HEADER) {
            return Err(CliError::Input(format!(
                "group file: expected header `{}`",
                HEADER.join(",")
            )));
        }
        let mut groups = Groups {
            explicit: true,
            ..Groups::default()
        };
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| CliError::Input(format!("group file line {line}: {e}")))?;
            let (kind, id, platform) = (&row[0], &row[1], &row[2]);
            if id.is_empty() || platform.is_empty() {
                return Err(CliError::Input(format!("group file line {line}: empty id or platform")));
            }
            let table = match kind {
                "token" => &mut groups.tokens,
                "wallet" => &mut groups.treasuries,
                other => {
                    return Err(CliError::Input(format!(
                        "group file line {line}: kind must be `token` or `wallet`, got `{other}`"
                    )))
                }
            };
            if table.insert(id.to_string(), platform.to_string()).is_some() {
                return Err(CliError::Input(format!("group file line {line}: duplicate {kind} `{id}`")));
            }
        }
        Ok(groups)
    }

    /// Platform whose users hold `token`; `None` for unassigned tokens.
    pub fn token_platform(&self, token: &str) -> Option<&str> {
        if self.explicit {
            self.tokens.get(token).map(String::as_str)
        } else {
            Some(ALL)
        }
    }

    /// Platform whose treasury `wallet` is, if any.
    pub fn treasury_platform(&self, wallet: &str) -> Option<&str> {
        self.treasuries.get(wallet).map(String::as_str)
    }

    pub fn has_treasuries(&self) -> bool {
        !self.treasuries.is_empty()
    }

    /// Every platform label, sorted.
    pub fn platforms(&self) -> Vec<&str> {
        if !self.explicit {
            return vec![ALL];
        }
        let set: BTreeSet<&str> = self
            .tokens
            .values()
            .chain(self.treasuries.values())
            .map(String::as_str)
            .collect();
        set.into_iter().collect()
    }
}
