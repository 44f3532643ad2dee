//! Synthetic datasets written in the hetrec2011 file layouts.
//!
//! Users belong to communities; each community favours a few item genres
//! and befriends mostly its own members. Items carry tags drawn mostly from
//! their genre's tags. Ratings, friendships and tags are therefore all
//! informative about each other, as they are in the real data.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Weighted interaction file, undated friendships, dated tags.
    Lastfm,
    /// Interactions implied by the tag rows, dated contacts.
    Delicious,
}

#[derive(Clone, Copy, Debug)]
pub struct World {
    pub layout: Layout,
    pub users: usize,
    pub items: usize,
    pub communities: usize,
    pub genres: usize,
    pub genres_per_community: usize,
    pub tags_per_genre: usize,
    pub interactions: (usize, usize),
    /// Share of a user's items taken from the community's genres.
    pub focus: f64,
    /// Share of an item's tags taken from its genre's tags.
    pub tag_purity: f64,
    pub friend_in: f64,
    pub friend_out: f64,
}

impl World {
    pub fn small(layout: Layout) -> World {
        World {
            layout,
            users: 60,
            items: 80,
            communities: 4,
            genres: 8,
            genres_per_community: 2,
            tags_per_genre: 6,
            interactions: (4, 12),
            focus: 0.85,
            tag_purity: 0.85,
            friend_in: 0.2,
            friend_out: 0.01,
        }
    }
}

const T0: i64 = 1_200_000_000_000;
const SPAN: i64 = 100_000_000_000;

fn user_id(i: usize) -> usize {
    2 + 3 * i
}

fn item_id(j: usize) -> usize {
    1 + 2 * j
}

/// Writes the files for `world` into `dir`.
pub fn write_hetrec(dir: &Path, world: &World, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = world;
    let community: Vec<usize> = (0..w.users).map(|i| i % w.communities).collect();
    let liked: Vec<Vec<usize>> = (0..w.communities)
        .map(|_| (0..w.genres_per_community).map(|_| rng.random_range(0..w.genres)).collect())
        .collect();
    let genre: Vec<usize> = (0..w.items).map(|_| rng.random_range(0..w.genres)).collect();
    let by_genre: Vec<Vec<usize>> = (0..w.genres)
        .map(|g| (0..w.items).filter(|&j| genre[j] == g).collect())
        .collect();
    // Zipf-like popularity inside each genre.
    let popularity: Vec<f64> = (0..w.items).map(|j| 1.0 / (1.0 + (j % 17) as f64)).collect();
    let vocabulary = w.genres * w.tags_per_genre;
    let tag_of = |rng: &mut ChaCha8Rng, j: usize| -> usize {
        if rng.random_bool(w.tag_purity) {
            genre[j] * w.tags_per_genre + rng.random_range(0..w.tags_per_genre)
        } else {
            rng.random_range(0..vocabulary)
        }
    };

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..w.users {
        let n = rng.random_range(w.interactions.0..=w.interactions.1);
        let mut mine: Vec<usize> = Vec::new();
        let mut attempts = 0;
        while mine.len() < n && attempts < 50 * n {
            attempts += 1;
            let pool: Vec<usize> = if rng.random_bool(w.focus) {
                let g = liked[community[i]][rng.random_range(0..w.genres_per_community)];
                by_genre[g].clone()
            } else {
                (0..w.items).collect()
            };
            if pool.is_empty() {
                continue;
            }
            let weights: Vec<f64> = pool.iter().map(|&j| popularity[j]).collect();
            let j = pool[WeightedIndex::new(&weights).unwrap().sample(&mut rng)];
            if !mine.contains(&j) {
                mine.push(j);
            }
        }
        pairs.extend(mine.into_iter().map(|j| (i, j)));
    }

    let mut tags = String::new();
    for &(i, j) in &pairs {
        let rows = match w.layout {
            Layout::Delicious => rng.random_range(1..=3),
            Layout::Lastfm => usize::from(rng.random_bool(0.6)) * rng.random_range(1..=2),
        };
        for _ in 0..rows {
            let t = tag_of(&mut rng, j);
            let when = T0 + rng.random_range(0..SPAN);
            writeln!(tags, "{}\t{}\t{}\t{when}", user_id(i), item_id(j), t + 1).unwrap();
        }
    }

    let mut friends = String::new();
    for a in 0..w.users {
        for b in a + 1..w.users {
            let p = if community[a] == community[b] { w.friend_in } else { w.friend_out };
            if rng.random_bool(p) {
                let when = T0 + rng.random_range(0..SPAN);
                for (x, y) in [(a, b), (b, a)] {
                    match w.layout {
                        Layout::Lastfm => writeln!(friends, "{}\t{}", user_id(x), user_id(y)).unwrap(),
                        Layout::Delicious => writeln!(friends, "{}\t{}\t{when}", user_id(x), user_id(y)).unwrap(),
                    }
                }
            }
        }
    }

    let mut catalog = String::from("tagID\ttagValue\n");
    for t in 0..vocabulary {
        writeln!(catalog, "{}\ttag-{t}", t + 1).unwrap();
    }
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("tags.dat"), catalog).unwrap();
    match w.layout {
        Layout::Lastfm => {
            let mut artists = String::from("userID\tartistID\tweight\n");
            for &(i, j) in &pairs {
                writeln!(artists, "{}\t{}\t{}", user_id(i), item_id(j), rng.random_range(1..5000)).unwrap();
            }
            fs::write(dir.join("user_artists.dat"), artists).unwrap();
            fs::write(dir.join("user_friends.dat"), format!("userID\tfriendID\n{friends}")).unwrap();
            fs::write(
                dir.join("user_taggedartists-timestamps.dat"),
                format!("userID\tartistID\ttagID\ttimestamp\n{tags}"),
            )
            .unwrap();
        }
        Layout::Delicious => {
            fs::write(
                dir.join("user_contacts-timestamps.dat"),
                format!("userID\tcontactID\ttimestamp\n{friends}"),
            )
            .unwrap();
            fs::write(
                dir.join("user_taggedbookmarks-timestamps.dat"),
                format!("userID\tbookmarkID\ttagID\ttimestamp\n{tags}"),
            )
            .unwrap();
        }
    }
}
