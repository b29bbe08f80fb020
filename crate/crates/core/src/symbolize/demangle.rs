/// Demangles Rust (legacy and v0) and Itanium C++ symbols. Anything else is
/// returned unchanged. Rust hashes are dropped.
pub fn demangle(raw: &str) -> String {
    if let Ok(sym) = rustc_demangle::try_demangle(raw) {
        return format!("{sym:#}");
    }
    if raw.starts_with("_Z") {
        if let Ok(sym) = cpp_demangle::Symbol::new(raw) {
            if let Ok(text) = sym.demangle(&cpp_demangle::DemangleOptions::default()) {
                return text;
            }
        }
    }
    raw.to_string()
}

/// Demangles and then cuts the name at its parameter list, so
/// `RubyPort::recvAtomic(Packet*)` becomes `RubyPort::recvAtomic`.
///
/// `(anonymous namespace)` is part of a qualified name, not a parameter
/// list, and is skipped over when looking for the cut. Demangled Rust paths
/// carry no parameter lists; any `(` in them belongs to generic arguments
/// such as `<()>`, so they are left whole.
pub fn display_name(raw: &str) -> String {
    if let Ok(sym) = rustc_demangle::try_demangle(raw) {
        return format!("{sym:#}");
    }
    let full = demangle(raw);
    const ANON: &str = "(anonymous namespace)";
    let mut from = 0;
    let cut = loop {
        match full[from..].find('(') {
            Some(rel) => {
                let at = from + rel;
                if full[at..].starts_with(ANON) {
                    from = at + ANON.len();
                } else {
                    break Some(at);
                }
            }
            None => break None,
        }
    };
    let trimmed = match cut {
        Some(at) => full[..at].trim_end(),
        None => full.trim_end(),
    };
    if trimmed.is_empty() {
        full
    } else {
        trimmed.to_string()
    }
}
