//! URL canonicalization for exact document-level matching.

use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot canonicalize url {url:?}: {reason}")]
pub struct UrlError {
    pub url: String,
    pub reason: String,
}

/// Lowercase scheme and host, drop default ports and the fragment, sort the
/// query by key and give an empty path a single `/`.
///
/// Query parameters are sorted by their raw key; parameters sharing a key keep
/// their relative order and percent-encoding is left untouched.
pub fn canonicalize_url(raw: &str) -> Result<String, UrlError> {
    let err = |reason: String| UrlError {
        url: raw.to_string(),
        reason,
    };
    let mut url = Url::parse(raw.trim()).map_err(|e| err(e.to_string()))?;
    if url.cannot_be_a_base() {
        return Err(err("not a hierarchical url".into()));
    }
    url.set_fragment(None);
    let query = url.query().map(|q| {
        let mut pairs: Vec<&str> = q.split('&').filter(|p| !p.is_empty()).collect();
        pairs.sort_by_key(|p| p.split_once('=').map_or(*p, |(k, _)| k));
        pairs.join("&")
    });
    match query {
        Some(q) if !q.is_empty() => url.set_query(Some(&q)),
        _ => url.set_query(None),
    }
    Ok(url.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(
            canonicalize_url("HTTP://Ex.com:80/a?b=1&a=2#frag").unwrap(),
            "http://ex.com/a?a=2&b=1"
        );
        assert_eq!(canonicalize_url("https://ex.com").unwrap(), "https://ex.com/");
        assert_eq!(canonicalize_url("https://ex.com:443/x?").unwrap(), "https://ex.com/x");
        assert_eq!(
            canonicalize_url("https://ex.com:8443/x").unwrap(),
            "https://ex.com:8443/x"
        );
        assert!(canonicalize_url("notaurl").is_err());
        assert!(canonicalize_url("mailto:someone@example.com").is_err());
    }

    #[test]
    fn repeated_keys_keep_order() {
        assert_eq!(
            canonicalize_url("http://a.org/p?z=1&k=2&k=1").unwrap(),
            "http://a.org/p?k=2&k=1&z=1"
        );
    }

    proptest! {
        #[test]
        fn idempotent(
            scheme in prop::sample::select(vec!["http", "HTTPS", "Http"]),
            host in "[a-zA-Z]{1,8}\\.(com|ORG|net)",
            port in prop::option::of(prop::sample::select(vec![80u16, 443, 8080])),
            path in "(/[a-zA-Z0-9%._-]{0,6}){0,3}",
            query in prop::collection::vec(("[a-z]{1,3}", "[a-zA-Z0-9%+]{0,4}"), 0..4),
            frag in prop::option::of("[a-z]{0,5}"),
        ) {
            let mut raw = format!("{scheme}://{host}");
            if let Some(p) = port {
                raw.push_str(&format!(":{p}"));
            }
            raw.push_str(&path);
            if !query.is_empty() {
                let q: Vec<String> = query.iter().map(|(k, v)| format!("{k}={v}")).collect();
                raw.push('?');
                raw.push_str(&q.join("&"));
            }
            if let Some(f) = frag {
                raw.push('#');
                raw.push_str(&f);
            }
            let once = canonicalize_url(&raw).unwrap();
            prop_assert_eq!(canonicalize_url(&once).unwrap(), once.clone());
            prop_assert!(!once.contains('#'));
        }
    }
}
