use searchassist_core::domain::AgentAction;

/// Utterance variants per agent action, rotated turn by turn.
pub fn variants(action: AgentAction) -> &'static [&'static str] {
    use AgentAction::*;
    match action {
        ProbeUseCase => &["What are you going to use the images for?", "Where will you use these images?"],
        ProbeToRefine => &[
            "Could you refine your query further so I can get you better images?",
            "Would you like to add something to your query?",
        ],
        ClusterCategories => &[
            "Categories might help you get better responses, click on the options below",
            "Do you want to browse through the following options?",
        ],
        ShowResults => &[
            "Here are some of the images",
            "Here you go, these are some of the best matches for your query",
            "Results for your query",
            "Check out some images that we have",
        ],
        AddToCartPrompt => &[
            "Your cart is the place where you can add the images you like. Click on the add to cart icon",
            "Add the images you like to your cart so you can find them later",
        ],
        AskToDownload => &["Would you like to download any of these images?", "You can download the images you like"],
        AskToPurchase => &[
            "Would you like to buy the images in your cart?",
            "Shall I take you to checkout for the images you picked?",
        ],
        ProvideDiscount => &[
            "There is a discount on these images today, would you like to buy them?",
            "You can get these images at a special price right now",
        ],
        SignUpPrompt => &[
            "Sign up to save your cart and get personalised results",
            "Would you like to sign up? It only takes a minute",
        ],
        AskFeedback => &["Are these results helpful?", "How do you like the results so far?"],
        ProvideHelp => &[
            "I can sign you up, search images for you, add them to your cart and much more. Type in the box to chat",
            "Type what you are looking for, or drag an image here to find similar ones",
        ],
        Salutation => &["Hello, how may I help you?", "Hi, type in the box below"],
    }
}

/// The utterance for `action` on the `turn`-th response of a session.
pub fn render(action: AgentAction, turn: u64) -> &'static str {
    let v = variants(action);
    v[(turn % v.len() as u64) as usize]
}
