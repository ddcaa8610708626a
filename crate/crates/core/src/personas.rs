//! Seeded artificial user profiles.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

pub const INTEREST_COUNT: usize = 3;
pub const AGE_RANGE: (u32, u32) = (16, 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

/// Phone price band in RMB, used as an income proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhonePrice {
    #[serde(rename = "<1000")]
    Under1000,
    #[serde(rename = "1000-2000")]
    From1000To2000,
    #[serde(rename = "2000-3000")]
    From2000To3000,
    #[serde(rename = "3000-5000")]
    From3000To5000,
    #[serde(rename = ">5000")]
    Over5000,
}

impl PhonePrice {
    pub const ALL: [PhonePrice; 5] = [
        PhonePrice::Under1000,
        PhonePrice::From1000To2000,
        PhonePrice::From2000To3000,
        PhonePrice::From3000To5000,
        PhonePrice::Over5000,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PhonePrice::Under1000 => "<1000",
            PhonePrice::From1000To2000 => "1000-2000",
            PhonePrice::From2000To3000 => "2000-3000",
            PhonePrice::From3000To5000 => "3000-5000",
            PhonePrice::Over5000 => ">5000",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Uses-and-gratifications motivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gratification {
    SocialInteraction,
    Entertainment,
    InformationSeeking,
    BrowsingVarietySeeking,
    Escapism,
}

impl Gratification {
    pub const ALL: [Gratification; 5] = [
        Gratification::SocialInteraction,
        Gratification::Entertainment,
        Gratification::InformationSeeking,
        Gratification::BrowsingVarietySeeking,
        Gratification::Escapism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gratification::SocialInteraction => "Social Interaction",
            Gratification::Entertainment => "Entertainment",
            Gratification::InformationSeeking => "Information-Seeking",
            Gratification::BrowsingVarietySeeking => "Browsing/Variety Seeking",
            Gratification::Escapism => "Escapism",
        }
    }

    fn description(self) -> &'static str {
        match self {
            Gratification::SocialInteraction => {
                "uses the app to connect with others and join conversations"
            }
            Gratification::Entertainment => "uses the app mainly to be entertained",
            Gratification::InformationSeeking => "uses the app to learn and stay informed",
            Gratification::BrowsingVarietySeeking => {
                "uses the app to browse and discover a variety of content"
            }
            Gratification::Escapism => "uses the app to escape from daily pressures",
        }
    }
}

/// OCEAN personality scores, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Personality {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl Personality {
    pub const TRAITS: [&'static str; 5] = [
        "openness",
        "conscientiousness",
        "extraversion",
        "agreeableness",
        "neuroticism",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }

    fn is_valid(&self) -> bool {
        self.values().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motivation {
    Gratification(Gratification),
    Personality(Personality),
}

/// Which motivation scheme a run uses. One scheme per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotivationKind {
    #[default]
    Gratification,
    Personality,
}

impl fmt::Display for MotivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotivationKind::Gratification => "gratification",
            MotivationKind::Personality => "personality",
        })
    }
}

impl std::str::FromStr for MotivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gratification" => Ok(MotivationKind::Gratification),
            "personality" => Ok(MotivationKind::Personality),
            other => Err(Error::InvalidConfig(format!(
                "unknown motivation kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub age: u32,
    pub gender: Gender,
    pub city_level: u8,
    pub phone_price: PhonePrice,
    pub initial_interests: Vec<String>,
    pub motivation: Motivation,
}

impl UserProfile {
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        let fail =
            |message: String| Err(Error::InvalidConfig(format!("{}: {message}", self.user_id)));
        if !(1..=4).contains(&self.city_level) {
            return fail(format!("city_level {} outside 1..=4", self.city_level));
        }
        if self.initial_interests.len() != INTEREST_COUNT {
            return fail(format!(
                "{} initial interests",
                self.initial_interests.len()
            ));
        }
        let roots = catalog.hierarchy().names(1);
        for (i, interest) in self.initial_interests.iter().enumerate() {
            if !roots.contains(interest) {
                return fail(format!("interest {interest:?} is not a level-1 category"));
            }
            if self.initial_interests[..i].contains(interest) {
                return fail(format!("duplicate interest {interest:?}"));
            }
        }
        if let Motivation::Personality(p) = &self.motivation {
            if !p.is_valid() {
                return fail("personality score outside [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn is_interested_in(&self, category_l1: &str) -> bool {
        self.initial_interests.iter().any(|c| c == category_l1)
    }

    pub fn openness(&self) -> Option<f64> {
        match self.motivation {
            Motivation::Personality(p) => Some(p.openness),
            Motivation::Gratification(_) => None,
        }
    }
}

/// Draws `n` profiles. Demographic marginals are uniform: age on 16..=60,
/// gender, city tier 1..=4 and the five phone-price bands. Interests are
/// three distinct level-1 categories.
pub fn generate_profiles(
    n: usize,
    seed: u64,
    kind: MotivationKind,
    catalog: &Catalog,
) -> Result<Vec<UserProfile>> {
    let roots: Vec<&String> = catalog.hierarchy().names(1).iter().collect();
    if roots.len() < INTEREST_COUNT {
        return Err(Error::TooFewCategories {
            found: roots.len(),
            required: INTEREST_COUNT,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len().max(3);
    let mut profiles = Vec::with_capacity(n);
    for i in 0..n {
        let age = rng.random_range(AGE_RANGE.0..=AGE_RANGE.1);
        let gender = *Gender::ALL.choose(&mut rng).expect("non-empty");
        let city_level = rng.random_range(1..=4u8);
        let phone_price = *PhonePrice::ALL.choose(&mut rng).expect("non-empty");
        let initial_interests = roots
            .choose_multiple(&mut rng, INTEREST_COUNT)
            .map(|s| s.to_string())
            .collect();
        let motivation = match kind {
            MotivationKind::Gratification => {
                Motivation::Gratification(*Gratification::ALL.choose(&mut rng).expect("non-empty"))
            }
            MotivationKind::Personality => Motivation::Personality(Personality {
                openness: rng.random(),
                conscientiousness: rng.random(),
                extraversion: rng.random(),
                agreeableness: rng.random(),
                neuroticism: rng.random(),
            }),
        };
        profiles.push(UserProfile {
            user_id: format!("u{:0width$}", i + 1),
            age,
            gender,
            city_level,
            phone_price,
            initial_interests,
            motivation,
        });
    }
    Ok(profiles)
}

/// Human-readable profile block used in agent prompts.
pub fn render_profile(profile: &UserProfile) -> String {
    let mut out = String::new();
    out.push_str(&format!("User ID: {}\n", profile.user_id));
    out.push_str(&format!("Age: {}\n", profile.age));
    out.push_str(&format!("Gender: {}\n", profile.gender.as_str()));
    out.push_str(&format!(
        "City level: tier {} (tier 1 is the most developed, tier 4 the least)\n",
        profile.city_level
    ));
    out.push_str(&format!(
        "Phone price: RMB {}\n",
        profile.phone_price.label()
    ));
    match &profile.motivation {
        Motivation::Gratification(g) => {
            out.push_str(&format!("Motivation: {} ({})\n", g.name(), g.description()));
        }
        Motivation::Personality(p) => {
            let traits: Vec<String> = Personality::TRAITS
                .iter()
                .zip(p.values())
                .map(|(name, v)| format!("{name} {v:.2}"))
                .collect();
            out.push_str(&format!(
                "Personality (0 = low, 1 = high): {}\n",
                traits.join(", ")
            ));
        }
    }
    out.push_str(&format!(
        "Initial interested categories: {}",
        profile.initial_interests.join(", ")
    ));
    out
}

pub fn save_profiles(profiles: &[UserProfile], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for profile in profiles {
        serde_json::to_writer(&mut writer, profile)?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_profiles(path: &Path) -> Result<Vec<UserProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut profiles = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        profiles.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(profiles)
}
