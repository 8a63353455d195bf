//! Published Recall@20 / NDCG@20 figures for side-by-side display.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Gowalla,
    Yelp2018,
    AmazonBook,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::Gowalla, Dataset::Yelp2018, Dataset::AmazonBook];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Gowalla => "gowalla",
            Dataset::Yelp2018 => "yelp2018",
            Dataset::AmazonBook => "amazon-book",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "gowalla" => Some(Dataset::Gowalla),
            "yelp2018" | "yelp" => Some(Dataset::Yelp2018),
            "amazonbook" | "amazon" => Some(Dataset::AmazonBook),
            _ => None,
        }
    }

    fn column(self) -> usize {
        self as usize
    }

    /// (users, items, interactions).
    pub fn stats(self) -> (usize, usize, usize) {
        match self {
            Dataset::Gowalla => (29_858, 40_981, 1_027_370),
            Dataset::Yelp2018 => (31_688, 38_048, 1_561_406),
            Dataset::AmazonBook => (52_643, 91_599, 2_984_108),
        }
    }

    /// Default batch size for this dataset.
    pub fn batch_size(self) -> usize {
        match self {
            Dataset::AmazonBook => 2048,
            _ => 1024,
        }
    }
}

/// Rows of (method, [(recall, ndcg); gowalla, yelp2018, amazon-book]).
pub const PUBLISHED: [(&str, [(f64, f64); 3]); 8] = [
    ("MF", [(0.1291, 0.1109), (0.0433, 0.0354), (0.0250, 0.0196)]),
    ("NeuMF", [(0.1399, 0.1212), (0.0451, 0.0363), (0.0258, 0.0200)]),
    ("NGCF", [(0.157, 0.1327), (0.0579, 0.0477), (0.0344, 0.0263)]),
    ("Mult-VAE", [(0.1641, 0.1335), (0.0584, 0.0450), (0.0407, 0.0315)]),
    ("GRMF", [(0.1477, 0.1205), (0.0571, 0.0462), (0.0354, 0.0270)]),
    ("LightGCN", [(0.183, 0.1554), (0.0649, 0.0530), (0.0411, 0.0315)]),
    ("SSB (512)", [(0.169, 0.1401), (0.0647, 0.0534), (0.0408, 0.0325)]),
    ("TSA (1024)", [(0.1704, 0.1415), (0.0657, 0.0542), (0.0456, 0.0364)]),
];

/// Published (recall, ndcg) of `method` on `dataset`.
pub fn published(method: &str, dataset: Dataset) -> Option<(f64, f64)> {
    PUBLISHED
        .iter()
        .find(|(m, _)| m.eq_ignore_ascii_case(method))
        .map(|(_, v)| v[dataset.column()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        assert_eq!(published("TSA (1024)", Dataset::Yelp2018), Some((0.0657, 0.0542)));
        assert_eq!(published("lightgcn", Dataset::Gowalla), Some((0.183, 0.1554)));
        assert_eq!(Dataset::from_name("Amazon-Book"), Some(Dataset::AmazonBook));
        let (m, n, _) = Dataset::Gowalla.stats();
        assert_eq!(m + n, 70_839);
    }
}
