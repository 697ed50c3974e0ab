#pragma once

#include <string>
#include <utility>
#include <vector>

// Published prior-only accuracies (percent) for the standard test splits.
namespace published {

inline constexpr double kCelebAPriorMean = 80.57;
inline constexpr double kLfwaPriorMean = 71.27;

inline const std::vector<std::pair<std::string, double>> kCelebAPrior = {
    {"5_o_Clock_Shadow", 88.83},
    {"Arched_Eyebrows", 73.41},
    {"Attractive", 51.36},
    {"Bags_Under_Eyes", 79.55},
    {"Bald", 97.72},
    {"Bangs", 84.83},
    {"Big_Lips", 75.91},
    {"Big_Nose", 76.44},
    {"Black_Hair", 76.10},
    {"Blond_Hair", 85.09},
    {"Blurry", 94.86},
    {"Brown_Hair", 79.61},
    {"Bushy_Eyebrows", 85.63},
    {"Chubby", 94.23},
    {"Double_Chin", 95.35},
    {"Eyeglasses", 93.54},
    {"Goatee", 93.65},
    {"Gray_Hair", 95.76},
    {"Heavy_Makeup", 61.57},
    {"High_Cheekbones", 54.76},
    {"Male", 58.06},
    {"Mouth_Slightly_Open", 51.78},
    {"Mustache", 95.92},
    {"Narrow_Eyes", 88.41},
    {"No_Beard", 83.42},
    {"Oval_Face", 71.68},
    {"Pale_Skin", 95.70},
    {"Pointy_Nose", 72.45},
    {"Receding_Hairline", 91.99},
    {"Rosy_Cheeks", 93.53},
    {"Sideburns", 94.37},
    {"Smiling", 52.03},
    {"Straight_Hair", 79.14},
    {"Wavy_Hair", 68.06},
    {"Wearing_Earrings", 81.35},
    {"Wearing_Hat", 95.06},
    {"Wearing_Lipstick", 53.04},
    {"Wearing_Necklace", 87.86},
    {"Wearing_Necktie", 92.70},
    {"Young", 77.89},
};

inline const std::vector<std::pair<std::string, double>> kLfwaPrior = {
    {"5_o_Clock_Shadow", 59.76},
    {"Arched_Eyebrows", 72.35},
    {"Attractive", 62.09},
    {"Bags_Under_Eyes", 59.52},
    {"Bald", 88.94},
    {"Bangs", 83.57},
    {"Big_Lips", 64.07},
    {"Big_Nose", 69.62},
    {"Black_Hair", 85.53},
    {"Blond_Hair", 95.75},
    {"Blurry", 84.66},
    {"Brown_Hair", 62.02},
    {"Bushy_Eyebrows", 53.58},
    {"Chubby", 64.31},
    {"Double_Chin", 65.58},
    {"Eyeglasses", 80.23},
    {"Goatee", 77.41},
    {"Gray_Hair", 83.94},
    {"Heavy_Makeup", 87.21},
    {"High_Cheekbones", 63.34},
    {"Male", 76.02},
    {"Mouth_Slightly_Open", 57.02},
    {"Mustache", 89.03},
    {"Narrow_Eyes", 63.45},
    {"No_Beard", 73.08},
    {"Oval_Face", 52.37},
    {"Pale_Skin", 50.82},
    {"Pointy_Nose", 68.4},
    {"Receding_Hairline", 56.36},
    {"Rosy_Cheeks", 81.46},
    {"Sideburns", 69.38},
    {"Smiling", 56.65},
    {"Straight_Hair", 60.1},
    {"Wavy_Hair", 57.94},
    {"Wearing_Earrings", 85.1},
    {"Wearing_Hat", 86.57},
    {"Wearing_Lipstick", 83.22},
    {"Wearing_Necklace", 78.54},
    {"Wearing_Necktie", 63.13},
    {"Young", 78.59},
};

}  // namespace published
