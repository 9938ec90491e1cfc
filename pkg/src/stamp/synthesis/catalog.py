"""Built-in seed catalog and the word pools the procedural generator draws from."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..seed_model import PlatformSeed, TaskSeed, canonical_digest

STARWAVE = PlatformSeed(
    app_type="social",
    app_name="StarWave",
    slogan="Discover every trend in everyday life",
    tabs=["Feed", "Search", "Profile", "Messages", "Me"],
    colors=["#FF5C8A", "#7A3CFF", "#F7F8FA"],
    card_style="Rounded cards",
    icon_style="Soft skeuomorphic",
    text_tone="Young, social, energetic",
    common_entities=["creator", "topic", "hot post", "followers", "likes", "shares"],
    detail_entry_points=["post detail", "topic detail", "pinned post on creator profile"],
    distractions=["Trending Picks", "You May Like", "Upgrade to Premium", "Find Contacts", "Live Stream"],
)

CARTNEST = PlatformSeed(
    app_type="shopping",
    app_name="CartNest",
    slogan="Everything you need, one tap away",
    tabs=["Home", "Categories", "Cart", "Orders", "Account"],
    colors=["#FF8A00", "#1F2A44", "#FFFFFF"],
    card_style="Flat tiles",
    icon_style="Outlined line icons",
    text_tone="Friendly, concise, helpful",
    common_entities=["product", "seller", "review", "coupon", "order"],
    detail_entry_points=["product detail", "seller storefront", "order detail"],
    distractions=["Flash Deals", "Recommended For You", "Join Plus", "Gift Cards", "Daily Check-in", "Share App"],
)

TRIPLOOM = PlatformSeed(
    app_type="travel",
    app_name="TripLoom",
    slogan="Plan less, wander more",
    tabs=["Explore", "Trips", "Saved", "Inbox"],
    colors=["#00A699", "#FC642D", "#F5F5F5"],
    card_style="Photo cards with overlays",
    icon_style="Filled glyphs",
    text_tone="Calm, inspiring, informative",
    common_entities=["hotel", "flight", "guide", "booking", "itinerary"],
    detail_entry_points=["hotel detail", "flight detail", "guide article"],
    distractions=["Weekend Escapes", "Travel Insurance", "Refer a Friend", "Price Alerts", "Photo Contest"],
)

PULSETRACK = PlatformSeed(
    app_type="fitness",
    app_name="PulseTrack",
    slogan="Move a little more every day",
    tabs=["Today", "Workouts", "Community", "Progress", "Settings"],
    colors=["#E53935", "#263238", "#FAFAFA"],
    card_style="Elevated panels",
    icon_style="Minimal monochrome",
    text_tone="Motivating, direct, upbeat",
    common_entities=["workout", "coach", "challenge", "badge", "session"],
    detail_entry_points=["workout detail", "coach profile", "challenge page"],
    distractions=["Go Premium", "Connect Watch", "Daily Tip", "Invite Friends", "Music Picks"],
)

DATE_COMPARE_LATEST = TaskSeed(
    id="date_compare_latest",
    description="Read dates from multiple detail pages, find the latest one, and submit the corresponding name",
    goal="Compare date fields and output the name associated with the latest date",
    required_steps=4,
    memory_load="medium",
    output_format="Output only the latest item's name",
    answer_type="single_label",
    ui_pattern=["Detail A", "Detail B", "Detail C", "Submit name"],
)

PRICE_COMPARE_LOWEST = TaskSeed(
    id="price_compare_lowest",
    description="Read prices from several detail pages, find the cheapest one, and submit its name",
    goal="Compare price fields and output the name associated with the lowest price",
    required_steps=4,
    memory_load="medium",
    output_format="Output only the cheapest item's name",
    answer_type="single_label",
    ui_pattern=["Detail A", "Detail B", "Detail C", "Submit name"],
)

CODE_ASSEMBLE = TaskSeed(
    id="code_assemble",
    description="Collect two code fragments shown on different pages and submit the assembled code",
    goal="Join the code fragments in page order with a hyphen",
    required_steps=3,
    memory_load="low",
    output_format="Output the full code as PART1-PART2",
    answer_type="code",
    ui_pattern=["Detail A", "Detail B", "Submit code"],
)

TAG_COMBINE = TaskSeed(
    id="tag_combine",
    description="Read the interest tag on each detail page and submit all tags in page order",
    goal="Combine the tags from every detail page separated by semicolons",
    required_steps=4,
    memory_load="high",
    output_format="Output tags joined with ';' and no spaces",
    answer_type="composite",
    ui_pattern=["Detail A", "Detail B", "Detail C", "Submit tags"],
)


@dataclass
class SeedCatalog:
    platforms: list[PlatformSeed] = field(default_factory=list)
    tasks: list[TaskSeed] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"platforms": [p.to_dict() for p in self.platforms], "tasks": [t.to_dict() for t in self.tasks]}

    @classmethod
    def from_dict(cls, d: dict) -> "SeedCatalog":
        return cls([PlatformSeed.from_dict(p) for p in d.get("platforms", [])],
                   [TaskSeed.from_dict(t) for t in d.get("tasks", [])])

    def digest(self) -> str:
        return canonical_digest(self.to_dict())


def default_catalog() -> SeedCatalog:
    return SeedCatalog(
        platforms=[STARWAVE, CARTNEST, TRIPLOOM, PULSETRACK],
        tasks=[DATE_COMPARE_LATEST, PRICE_COMPARE_LOWEST, CODE_ASSEMBLE, TAG_COMBINE],
    )


FIRST_NAMES = [
    "Alice", "Bruno", "Chiara", "Dmitri", "Elena", "Farid", "Grace", "Hiro", "Ines", "Jonas",
    "Kemal", "Lena", "Mateo", "Nadia", "Oscar", "Priya", "Quinn", "Rosa", "Samir", "Tess",
    "Umar", "Vera", "Wen", "Xavier", "Yara", "Zane",
]
LAST_NAMES = [
    "Smith", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Costa", "Novak", "Haddad", "Reyes", "Larsen",
    "Kowal", "Ibarra", "Sato", "Fischer", "Mensah", "Duarte", "Quist", "Varga", "Wolfe", "Yilmaz",
]
TAGS = [
    "coding-course", "emotional-intelligence", "sunset-yoga", "budget-travel", "street-food",
    "indie-games", "urban-sketching", "home-barista", "trail-running", "vinyl-records",
    "night-photography", "plant-care", "chess-openings", "film-noir", "sourdough-baking",
    "bird-watching", "jazz-piano", "minimal-living",
]
CODE_LETTERS = "ABCDEFGHJKLMNPRSTUVWXYZ"
