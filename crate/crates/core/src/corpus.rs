//! A small Spanish-like sentence grammar used for synthetic stimuli and
//! language-model training text.
//!
//! Sentences are declarative, 5 to 8 words long, lowercase, without
//! diacritics. Word choice within each category is Zipf-weighted so the
//! corpus has frequent and rare words.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASC_NOUNS: &[&str] = &[
    "perro", "gato", "libro", "coche", "hombre", "nino", "amigo", "padre", "hermano", "vecino",
    "medico", "profesor", "tren", "barco", "arbol", "camino", "pueblo", "mercado", "parque", "jardin",
    "museo", "teatro", "periodico", "telefono", "ordenador", "cuadro", "regalo", "viaje", "trabajo", "problema",
    "caballo", "pajaro", "pescado", "queso", "vino", "cafe", "pan", "rio", "mar", "cielo",
    "sol", "viento", "invierno", "verano", "lunes", "banco", "hotel", "restaurante", "edificio", "puente",
];
const FEM_NOUNS: &[&str] = &[
    "casa", "mesa", "silla", "mujer", "nina", "amiga", "madre", "hermana", "vecina", "medica",
    "profesora", "ciudad", "calle", "playa", "montana", "ventana", "puerta", "cocina", "escuela", "iglesia",
    "tienda", "carta", "revista", "pelicula", "cancion", "historia", "noticia", "pregunta", "respuesta", "idea",
    "fruta", "manzana", "naranja", "leche", "sopa", "comida", "cena", "fiesta", "semana", "noche",
    "tarde", "luna", "lluvia", "nieve", "flor", "planta", "bicicleta", "maleta", "camisa", "llave",
];
/// Adjectives with a gendered `-o`/`-a` ending are given by their stem.
const GENDERED_ADJ: &[&str] = &[
    "nuev", "viej", "pequen", "alt", "baj", "bonit", "feo", "rapid", "lent", "blanc",
    "negr", "roj", "amarill", "limpi", "suci", "ric", "buen", "mal", "largo", "cort",
    "tranquil", "famos", "antigu", "modern", "oscur",
];
const PLAIN_ADJ: &[&str] = &[
    "grande", "verde", "azul", "feliz", "triste", "facil", "dificil", "joven", "fuerte", "dulce",
    "caliente", "importante", "interesante", "enorme", "elegante",
];
const VERBS: &[&str] = &[
    "come", "compra", "vende", "mira", "busca", "encuentra", "lleva", "trae", "prepara", "limpia",
    "abre", "cierra", "pinta", "escribe", "lee", "necesita", "quiere", "prefiere", "visita", "conoce",
    "recuerda", "olvida", "pierde", "gana", "usa", "cambia", "espera", "sigue", "deja", "toma",
    "recibe", "envia", "guarda", "rompe", "arregla", "cuida", "describe", "dibuja", "observa", "cocina",
];
const INTRANS_VERBS: &[&str] = &[
    "camina", "corre", "duerme", "trabaja", "canta", "baila", "llega", "sale", "vive", "descansa",
    "espera", "viaja", "juega", "nada", "estudia",
];
const ADVERBS: &[&str] = &[
    "hoy", "siempre", "nunca", "ahora", "temprano", "despacio", "mucho", "poco", "bien", "tarde",
];
const PREPS: &[&str] = &["en", "con", "para", "sin", "desde", "hacia", "sobre", "entre"];
const NAMES: &[&str] = &[
    "maria", "juan", "pedro", "lucia", "carmen", "jose", "ana", "pablo", "elena", "carlos",
    "sofia", "diego", "laura", "miguel", "marta", "javier", "isabel", "antonio", "rosa", "luis",
];
const MASC_DET: &[&str] = &["el", "un", "este", "ese", "nuestro", "aquel"];
const FEM_DET: &[&str] = &["la", "una", "esta", "esa", "nuestra", "aquella"];

#[derive(Clone, Copy)]
enum Gender {
    Masc,
    Fem,
}

/// Seeded generator of grammatical sentences.
pub struct SentenceGenerator {
    rng: ChaCha8Rng,
}

impl SentenceGenerator {
    pub fn new(seed: u64) -> Self {
        SentenceGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn zipf<'a>(&mut self, words: &[&'a str]) -> &'a str {
        // weights 1/(rank+1); precomputing is not worth it for lists this short
        let total: f64 = (1..=words.len()).map(|r| 1.0 / r as f64).sum();
        let mut u = self.rng.random::<f64>() * total;
        for (i, w) in words.iter().enumerate() {
            u -= 1.0 / (i + 1) as f64;
            if u <= 0.0 {
                return w;
            }
        }
        words[words.len() - 1]
    }

    fn noun_phrase(&mut self, words: &mut Vec<String>, with_adj: bool) {
        let gender = if self.rng.random::<bool>() { Gender::Masc } else { Gender::Fem };
        let (dets, nouns) = match gender {
            Gender::Masc => (MASC_DET, MASC_NOUNS),
            Gender::Fem => (FEM_DET, FEM_NOUNS),
        };
        words.push(self.zipf(dets).to_string());
        words.push(self.zipf(nouns).to_string());
        if with_adj {
            let adj = self.adjective(gender);
            words.push(adj);
        }
    }

    fn adjective(&mut self, gender: Gender) -> String {
        if self.rng.random::<f64>() < 0.6 {
            let stem = self.zipf(GENDERED_ADJ);
            let stem = stem.strip_suffix('o').unwrap_or(stem);
            match gender {
                Gender::Masc => format!("{stem}o"),
                Gender::Fem => format!("{stem}a"),
            }
        } else {
            self.zipf(PLAIN_ADJ).to_string()
        }
    }

    /// One sentence of 5 to 8 words.
    pub fn sentence(&mut self) -> String {
        let mut w: Vec<String> = Vec::with_capacity(8);
        match self.rng.random_range(0..6) {
            0 => {
                // det noun adj verb prep det noun
                self.noun_phrase(&mut w, true);
                w.push(self.zipf(VERBS).into());
                w.push(self.zipf(PREPS).into());
                self.noun_phrase(&mut w, false);
            }
            1 => {
                // det noun verb det noun adj
                self.noun_phrase(&mut w, false);
                w.push(self.zipf(VERBS).into());
                self.noun_phrase(&mut w, true);
            }
            2 => {
                // det noun adj verb adv
                self.noun_phrase(&mut w, true);
                w.push(self.zipf(INTRANS_VERBS).into());
                w.push(self.zipf(ADVERBS).into());
            }
            3 => {
                // det noun verb prep det noun
                self.noun_phrase(&mut w, false);
                w.push(self.zipf(INTRANS_VERBS).into());
                w.push(self.zipf(PREPS).into());
                self.noun_phrase(&mut w, false);
            }
            4 => {
                // det noun de name verb det noun adj
                self.noun_phrase(&mut w, false);
                w.push("de".into());
                w.push(self.zipf(NAMES).into());
                w.push(self.zipf(VERBS).into());
                self.noun_phrase(&mut w, true);
            }
            _ => {
                // name verb det noun adj prep det noun
                w.push(self.zipf(NAMES).into());
                w.push(self.zipf(VERBS).into());
                self.noun_phrase(&mut w, true);
                w.push(self.zipf(PREPS).into());
                self.noun_phrase(&mut w, false);
            }
        }
        w.join(" ")
    }
}

/// `n` distinct sentences.
pub fn unique_sentences(n: usize, seed: u64) -> Vec<String> {
    let mut gen = SentenceGenerator::new(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = gen.sentence();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Newline-separated training text of roughly `bytes` bytes that never
/// contains any sentence from `exclude`.
pub fn corpus_text(bytes: usize, seed: u64, exclude: &HashSet<String>) -> String {
    let mut gen = SentenceGenerator::new(seed);
    let mut text = String::with_capacity(bytes + 64);
    while text.len() < bytes {
        let s = gen.sentence();
        if exclude.contains(&s) {
            continue;
        }
        text.push_str(&s);
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_have_five_to_eight_words() {
        let mut g = SentenceGenerator::new(1);
        for _ in 0..500 {
            let s = g.sentence();
            let n = s.split(' ').count();
            assert!((5..=8).contains(&n), "{s}");
            assert!(s.chars().all(|c| c.is_ascii_lowercase() || c == ' '), "{s}");
        }
    }

    #[test]
    fn deterministic_and_unique() {
        let a = unique_sentences(50, 9);
        assert_eq!(a, unique_sentences(50, 9));
        let set: BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 50);
    }

    #[test]
    fn corpus_respects_exclusion() {
        let held: HashSet<String> = unique_sentences(20, 3).into_iter().collect();
        let text = corpus_text(20_000, 3, &held);
        assert!(text.len() >= 20_000);
        assert!(text.lines().all(|l| !held.contains(l)));
    }
}
