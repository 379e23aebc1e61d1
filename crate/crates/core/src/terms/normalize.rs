use crate::error::{Error, Result};

/// Canonical form used to compare term variants: lowercased, hyphens and
/// underscores read as spaces, whitespace collapsed, and leading/trailing
/// punctuation stripped.
pub fn normalize_term(surface: &str) -> Result<String> {
    let lowered: String = surface
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .collect();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        return Err(Error::EmptyNormalization(surface.to_string()));
    }
    // Stripping may expose whitespace next to punctuation ("( a b )").
    if trimmed.len() != collapsed.len() {
        let again = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
        return Ok(again);
    }
    Ok(trimmed.to_string())
}

/// Initial letters of each word, with dots removed (`u.s` -> `us`).
pub(crate) fn strip_dots(s: &str) -> String {
    s.chars().filter(|&c| c != '.' && c != ' ').collect()
}

const GENERIC_HEADS: &[&str] = &[
    "city",
    "state",
    "county",
    "province",
    "university",
    "college",
    "company",
    "corporation",
    "inc",
    "ltd",
    "group",
];

/// Initialisms a multi-word term can be abbreviated to: the initials of all
/// words, plus the initials without a trailing generic head noun
/// (`new york city` -> `nyc`, `ny`).
pub(crate) fn initialisms(normalized: &str) -> Vec<String> {
    let words: Vec<&str> = normalized.split(' ').collect();
    if words.len() < 2 {
        return Vec::new();
    }
    let initials = |ws: &[&str]| -> String { ws.iter().filter_map(|w| w.chars().next()).collect() };
    let mut out = vec![initials(&words)];
    if words.len() >= 3 && GENERIC_HEADS.contains(words.last().expect("len >= 3")) {
        out.push(initials(&words[..words.len() - 1]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_term("New-York").unwrap(), "new york");
        assert_eq!(normalize_term("new   york ").unwrap(), "new york");
        assert_eq!(normalize_term("snake_case_name").unwrap(), "snake case name");
        assert_eq!(normalize_term("\"King's College\",").unwrap(), "king's college");
        assert_eq!(normalize_term("U.S.").unwrap(), "u.s");
        assert!(matches!(normalize_term("--"), Err(Error::EmptyNormalization(_))));
        assert!(matches!(normalize_term(" "), Err(Error::EmptyNormalization(_))));
    }

    #[test]
    fn initialism_variants() {
        assert_eq!(initialisms("new york"), ["ny"]);
        assert_eq!(initialisms("new york city"), ["nyc", "ny"]);
        assert!(initialisms("python").is_empty());
        assert_eq!(strip_dots("u.s"), "us");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            if let Ok(once) = normalize_term(&s) {
                prop_assert_eq!(normalize_term(&once).unwrap(), once);
            }
        }
    }
}
