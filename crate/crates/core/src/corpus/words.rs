//! Bundled name vocabulary for synthetic worlds.

/// Class names and the words whose presence in a name signals the class.
pub const CLASS_MOTIFS: &[(&str, &[&str])] = &[
    ("healthcare", &["clinic", "pharmacy", "hospital", "dental", "medical", "surgery"]),
    ("education", &["school", "academy", "college", "library", "tutoring", "campus"]),
    ("financial", &["bank", "credit", "savings", "exchange", "loans", "trust"]),
    ("transportation", &["station", "depot", "terminal", "parking", "garage", "ferry"]),
    ("entertainment", &["theatre", "cinema", "arcade", "bowling", "casino", "gallery"]),
    ("food", &["bakery", "diner", "bistro", "cafe", "grill", "kitchen"]),
    ("religion", &["church", "chapel", "temple", "mosque", "abbey", "shrine"]),
    ("public_service", &["police", "post", "court", "council", "fire", "registry"]),
    ("facilities", &["toilets", "shelter", "fountain", "recycling", "laundry", "storage"]),
];

/// Place-like first words; shared by every class.
pub const PREFIXES: &[&str] = &[
    "maple", "oak", "cedar", "willow", "birch", "pine", "elm", "ash", "aspen", "hazel",
    "river", "lake", "hill", "valley", "meadow", "harbor", "bridge", "mill", "stone", "brook",
    "north", "south", "east", "west", "central", "union", "market", "king", "queen", "royal",
    "grand", "old", "new", "green", "red", "silver", "golden", "summit", "park", "garden",
    "victoria", "albert", "franklin", "lincoln", "jefferson", "madison", "monroe", "jackson",
    "hamilton", "clinton", "regent", "baker", "camden", "chelsea", "dover", "essex", "kent",
    "oxford", "surrey", "windsor", "york", "salem", "fairview", "riverside", "highland",
    "lakeside", "brighton", "clifton", "ashford", "bedford",
];

/// Generic second words carrying no class signal.
pub const SUFFIXES: &[&str] = &[
    "hall", "house", "place", "court", "corner", "square", "point", "center", "works", "yard",
    "lodge", "plaza", "row", "gate", "view", "end", "cross", "green", "heights", "commons",
];
