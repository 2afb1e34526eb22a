/// One built-in chart or Morse function, as listed by `adia-strips catalog`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub dims: &'static str,
    pub formula: &'static str,
    pub params: &'static str,
}

pub fn catalog_charts() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry { id: "flat", dims: "1,2", formula: "g = I", params: "" },
        CatalogEntry {
            id: "conformal-1d",
            dims: "1",
            formula: "g = exp(2 amp sin(2 pi q))",
            params: "amplitude (default 0.2)",
        },
        CatalogEntry {
            id: "diag-perturbed-2d",
            dims: "2",
            formula: "g = I + amp diag(sin 2 pi q1, cos 2 pi q2)",
            params: "amplitude, |amp| < 1 (default 0.1)",
        },
    ]
}

pub fn catalog_morse() -> Vec<CatalogEntry> {
    vec![CatalogEntry {
        id: "cosine-wells",
        dims: "1,2",
        formula: "f = -sum_i A_i cos(2 pi k_i q_i + phi_i)",
        params: "amplitude A, wavenumber k (positive integer, default 1), phase phi (default 0)",
    }]
}
