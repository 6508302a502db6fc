//! The 13-tag universal word-class set and reconciliation of other
//! tag inventories onto it.

use std::fmt;
use std::str::FromStr;

/// The 13 universal word classes used as successor labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Upos {
    Num,
    Verb,
    Adj,
    X,
    Part,
    Noun,
    Sconj,
    Adp,
    Det,
    Pron,
    Conj,
    Aux,
    Adv,
}

pub const ALL_TAGS: [Upos; 13] = [
    Upos::Num,
    Upos::Verb,
    Upos::Adj,
    Upos::X,
    Upos::Part,
    Upos::Noun,
    Upos::Sconj,
    Upos::Adp,
    Upos::Det,
    Upos::Pron,
    Upos::Conj,
    Upos::Aux,
    Upos::Adv,
];

impl Upos {
    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Num => "NUM",
            Upos::Verb => "VERB",
            Upos::Adj => "ADJ",
            Upos::X => "X",
            Upos::Part => "PART",
            Upos::Noun => "NOUN",
            Upos::Sconj => "SCONJ",
            Upos::Adp => "ADP",
            Upos::Det => "DET",
            Upos::Pron => "PRON",
            Upos::Conj => "CONJ",
            Upos::Aux => "AUX",
            Upos::Adv => "ADV",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ALL_TAGS
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or(())
    }
}

/// Result of mapping an arbitrary tag string onto the 13-tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconciled {
    /// Already one of the 13 tags.
    Exact(Upos),
    /// A known near-synonym from the wider UD inventory.
    Mapped(Upos),
    /// Anything else; mapped to `X` and worth a warning count.
    Unknown,
}

/// Maps a tag string from a wider inventory (e.g. the 17-tag UD set) onto
/// the 13-tag set. `CCONJ` folds into `CONJ` and `PROPN` into `NOUN`;
/// everything unrecognized lands on `X`.
pub fn reconcile(tag: &str) -> Reconciled {
    if let Ok(t) = tag.parse::<Upos>() {
        return Reconciled::Exact(t);
    }
    match tag {
        "CCONJ" => Reconciled::Mapped(Upos::Conj),
        "PROPN" => Reconciled::Mapped(Upos::Noun),
        _ => Reconciled::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_tags_round_trip() {
        assert_eq!(ALL_TAGS.len(), 13);
        for tag in ALL_TAGS {
            assert_eq!(tag.as_str().parse::<Upos>(), Ok(tag));
        }
    }

    #[test]
    fn cconj_folds_into_conj() {
        assert_eq!(reconcile("CCONJ"), Reconciled::Mapped(Upos::Conj));
        assert_eq!(reconcile("PROPN"), Reconciled::Mapped(Upos::Noun));
        assert_eq!(reconcile("NOUN"), Reconciled::Exact(Upos::Noun));
        assert_eq!(reconcile("INTJ"), Reconciled::Unknown);
        assert_eq!(reconcile("whatever"), Reconciled::Unknown);
    }
}
