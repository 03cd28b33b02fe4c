//! Class and method names shared by the shims (which log them) and the
//! analyzer (which interprets them).

macro_rules! names {
    ($(#[$m:meta])* $enum:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $enum {
            $($variant,)+
            Other,
        }

        impl $enum {
            pub const ALL: &'static [$enum] = &[$($enum::$variant),+];

            pub fn from_name(name: &str) -> Self {
                match name {
                    $($text => $enum::$variant,)+
                    _ => $enum::Other,
                }
            }

            pub const fn name(self) -> &'static str {
                match self {
                    $($enum::$variant => $text,)+
                    $enum::Other => "?",
                }
            }
        }
    };
}

names!(
    /// Logged method names.
    MethodKind {
        Ctor => "ctor",
        CopyCtor => "copy_ctor",
        MoveCtor => "move_ctor",
        Dtor => "dtor",
        PushBack => "push_back",
        EmplaceBack => "emplace_back",
        Insert => "insert",
        Reserve => "reserve",
        Realloc => "realloc",
        ShrinkToFit => "shrink_to_fit",
        Subscript => "subscript",
        Count => "count",
        Find => "find",
        IterOrdered => "iter_ordered",
        Append => "append",
        Incref => "incref",
        Decref => "decref",
    }
);

names!(
    /// Logged class names.
    ClassKind {
        Vector => "vector",
        String => "string",
        Map => "map",
        UnorderedMap => "unordered_map",
        SharedPtr => "shared_ptr",
    }
);

impl MethodKind {
    pub fn is_constructor(self) -> bool {
        matches!(
            self,
            MethodKind::Ctor | MethodKind::CopyCtor | MethodKind::MoveCtor
        )
    }

    pub fn is_lookup(self) -> bool {
        matches!(
            self,
            MethodKind::Count | MethodKind::Find | MethodKind::Subscript
        )
    }
}

impl ClassKind {
    pub fn is_container(self) -> bool {
        matches!(
            self,
            ClassKind::Vector | ClassKind::String | ClassKind::Map | ClassKind::UnorderedMap
        )
    }

    pub fn is_map(self) -> bool {
        matches!(self, ClassKind::Map | ClassKind::UnorderedMap)
    }
}

/// Bytes a text buffer holds without a heap allocation.
pub const INLINE_TEXT_BYTES: usize = 15;
