//! Seeded synthetic text-classification datasets.
//!
//! Each class draws its words from its own vocabulary plus a shared pool of
//! noise words, which makes separability a property of the generator rather
//! than of luck.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::intake::{Dataset, Row};

/// `count` distinct words `prefix0 .. prefix{count-1}`.
pub fn vocabulary(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub label: String,
    pub rows: usize,
    pub vocabulary: Vec<String>,
}

impl ClassSpec {
    pub fn new(label: &str, rows: usize, vocabulary: Vec<String>) -> Self {
        ClassSpec {
            label: label.to_string(),
            rows,
            vocabulary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub classes: Vec<ClassSpec>,
    pub noise: Vec<String>,
    /// Class words in the title column.
    pub title_words: usize,
    /// Class words in the body column.
    pub body_words: usize,
    /// Shared noise words in the body column.
    pub noise_words: usize,
}

impl Generator {
    /// Table with `title`, `body` and `label` columns; rows are shuffled.
    pub fn generate(&self, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Row> = Vec::new();
        for class in &self.classes {
            for _ in 0..class.rows {
                let title: Vec<&str> = (0..self.title_words)
                    .map(|_| class.vocabulary.choose(&mut rng).unwrap().as_str())
                    .collect();
                let mut body: Vec<&str> = (0..self.body_words)
                    .map(|_| class.vocabulary.choose(&mut rng).unwrap().as_str())
                    .collect();
                body.extend((0..self.noise_words).map(|_| self.noise.choose(&mut rng).unwrap().as_str()));
                body.shuffle(&mut rng);
                rows.push(vec![
                    Some(title.join(" ")),
                    Some(body.join(" ")),
                    Some(class.label.clone()),
                ]);
            }
        }
        rows.shuffle(&mut rng);
        Dataset::new(vec!["title".into(), "body".into(), "label".into()], rows).expect("generated table is rectangular")
    }
}

/// Two classes of `rows / 2` with disjoint 50-word vocabularies and 100
/// shared noise words.
pub fn binary_news(rows: usize) -> Generator {
    Generator {
        classes: vec![
            ClassSpec::new("real", rows / 2, vocabulary("real", 50)),
            ClassSpec::new("fake", rows - rows / 2, vocabulary("fake", 50)),
        ],
        noise: vocabulary("common", 100),
        title_words: 4,
        body_words: 12,
        noise_words: 12,
    }
}

/// Four topics with 200/100/60/40 rows. The two rarest topics share most
/// of their vocabulary, so the final cascade stage is the hard one.
pub fn four_topics() -> Generator {
    let shared = vocabulary("gadget", 40);
    let with_shared = |own: Vec<String>| shared.iter().cloned().chain(own).collect::<Vec<_>>();
    Generator {
        classes: vec![
            ClassSpec::new("world", 200, vocabulary("world", 50)),
            ClassSpec::new("sports", 100, vocabulary("sport", 50)),
            ClassSpec::new("tech", 60, with_shared(vocabulary("tech", 10))),
            ClassSpec::new("science", 40, with_shared(vocabulary("sci", 10))),
        ],
        noise: vocabulary("common", 100),
        title_words: 3,
        body_words: 10,
        noise_words: 8,
    }
}

/// Six classes where the rarest is ten times smaller than each of the
/// others and written with the vocabulary of the first one, so a model
/// cannot find it while still scoring well on the rest.
pub fn hidden_minority() -> Generator {
    let topics = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let mut classes: Vec<ClassSpec> = topics
        .iter()
        .map(|t| ClassSpec::new(t, 200, vocabulary(t, 50)))
        .collect();
    classes.push(ClassSpec::new("rare", 20, vocabulary("alpha", 50)));
    Generator {
        classes,
        noise: vocabulary("common", 100),
        title_words: 3,
        body_words: 10,
        noise_words: 8,
    }
}
