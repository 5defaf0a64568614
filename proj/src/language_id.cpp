#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "evomerge/evaluation.hpp"

namespace evomerge {

namespace {

// Decodes one UTF-8 code point; malformed bytes decode as U+FFFD and advance by one.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        const int c = cont(static_cast<std::size_t>(k));
        if (c < 0) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | static_cast<char32_t>(c);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

enum Script { latin, kana, han, hangul, cyrillic, arabic, greek, n_scripts };

}  // namespace

std::string default_language_id(std::string_view text) {
    std::array<std::size_t, n_scripts> counts{};
    std::size_t german = 0, italian = 0, french = 0, spanish = 0, dutch = 0;
    for (std::size_t i = 0; i < text.size();) {
        const char32_t cp = next_code_point(text, i);
        if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z') || (cp >= 0xC0 && cp <= 0x24F)) {
            ++counts[latin];
        } else if ((cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0x31F0 && cp <= 0x31FF) || (cp >= 0xFF66 && cp <= 0xFF9F)) {
            ++counts[kana];
        } else if ((cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF)) {
            ++counts[han];
        } else if (cp >= 0xAC00 && cp <= 0xD7AF) {
            ++counts[hangul];
        } else if (cp >= 0x0400 && cp <= 0x04FF) {
            ++counts[cyrillic];
        } else if (cp >= 0x0600 && cp <= 0x06FF) {
            ++counts[arabic];
        } else if (cp >= 0x0370 && cp <= 0x03FF) {
            ++counts[greek];
        }
        switch (cp) {
            case U'ä': case U'ö': case U'ü': case U'ß': case U'Ä': case U'Ö': case U'Ü': ++german; break;
            case U'à': case U'ì': case U'ò': case U'ù': case U'È': ++italian; break;
            case U'ç': case U'ê': case U'â': case U'î': case U'ô': case U'û': case U'œ': ++french; break;
            case U'ñ': case U'¿': case U'¡': case U'á': case U'í': case U'ó': case U'ú': ++spanish; break;
            case U'ĳ': case U'ë': case U'ï': ++dutch; break;
            default: break;
        }
    }

    // Any kana means Japanese even when kanji dominate.
    if (counts[kana] > 0) return "ja";
    std::size_t best = latin;
    for (std::size_t s = 0; s < n_scripts; ++s) {
        if (counts[s] > counts[best]) best = s;
    }
    if (counts[best] == 0) return "und";
    switch (best) {
        case han: return "zh";
        case hangul: return "ko";
        case cyrillic: return "ru";
        case arabic: return "ar";
        case greek: return "el";
        default: break;
    }
    const std::array<std::pair<std::size_t, const char*>, 5> marks{
        {{german, "de"}, {italian, "it"}, {french, "fr"}, {spanish, "es"}, {dutch, "nl"}}};
    std::size_t top = 0;
    const char* lang = "en";
    for (const auto& [count, code] : marks) {
        if (count > top) {
            top = count;
            lang = code;
        }
    }
    return lang;
}

}  // namespace evomerge
