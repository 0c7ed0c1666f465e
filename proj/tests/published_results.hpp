#pragma once

#include <array>
#include <string_view>

// Published figures for twelve face-editing commands: printed indicator,
// normalized command delta and ten normalized entanglement deltas, for the
// baseline mapper and the entanglement-aware mapper.

namespace published {

struct Row {
  std::string_view attribute;
  double baseline;
  double ours;
};

struct SubTable {
  char label;
  std::string_view command;
  double baseline_indicator;
  double ours_indicator;
  double baseline_dc;
  double ours_dc;
  std::array<Row, 10> rows;
};

inline constexpr std::array<SubTable, 12> kSubTables = {{
    {'a', "grey hair", 0.3359, 0.0071, 0.4878, 0.3519,
     {{{"short eyebrows", 0.1637, 0.0261},
      {"short hair", 0.1945, 0.0445},
      {"with bangs", 0.0927, 0.0122},
      {"grey eyes", 0.2433, 0.0590},
      {"sideburns", 0.1548, 0.0195},
      {"narrow eyes", 0.1393, 0.0126},
      {"high cheekbones", 0.0873, -0.0022},
      {"white skin", 0.2641, 0.0644},
      {"pointy face", 0.1362, 0.0161},
      {"with makeup", 0.1626, 0.0149}}}},
    {'b', "black hair", 0.5553, 0.1411, 0.3628, 0.1898,
     {{{"short eyebrows", 0.2362, 0.0433},
      {"with bangs", 0.1583, 0.0270},
      {"short hair", 0.1927, 0.0245},
      {"black eyes", 0.2555, 0.0458},
      {"narrow eyes", 0.2005, 0.0228},
      {"high cheekbones", 0.2002, -0.0253},
      {"with lipstick", 0.1683, -0.0237},
      {"pointy face", 0.2078, 0.0232},
      {"sideburns", 0.1694, 0.0103},
      {"with makeup", 0.1708, 0.0219}}}},
    {'c', "wavy hair", 0.4022, 0.1691, 0.2877, 0.1442,
     {{{"blue eyes", 0.1249, 0.0235},
      {"long hair", 0.1591, 0.0453},
      {"brown hair", 0.1349, 0.0305},
      {"with makeup", 0.1274, 0.0249},
      {"wide eyes", 0.1186, 0.0246},
      {"with earrings", 0.0940, 0.0165},
      {"with bangs", 0.0815, -0.0105},
      {"pinched nose", 0.1027, 0.0173},
      {"with lipstick", 0.1136, 0.0278},
      {"close mouth", 0.1004, 0.0185}}}},
    {'d', "with bangs", 0.3870, 0.1266, 0.3451, 0.2384,
     {{{"short hair", 0.1568, 0.0525},
      {"with lipstick", 0.1249, 0.0318},
      {"smiling", 0.1030, 0.0155},
      {"round eyes", 0.1418, 0.0242},
      {"with makeup", 0.1368, 0.0221},
      {"brown hair", 0.1927, 0.0552},
      {"brown eyes", 0.1316, -0.0239},
      {"with glasses", 0.0640, 0.0157},
      {"thin nose", 0.1441, 0.0219},
      {"with earrings", 0.1399, 0.0391}}}},
    {'e', "with wrinkles", 0.3269, 0.1298, 0.3679, 0.1341,
     {{{"grey hair", 0.2560, 0.0336},
      {"receding hairline", 0.0417, 0.0035},
      {"no beard", 0.0858, 0.0119},
      {"long eyebrows", 0.1132, 0.0316},
      {"long face", 0.1351, 0.0372},
      {"male", 0.1008, 0.0035},
      {"narrow eyes", 0.1096, -0.0065},
      {"big nose", 0.0842, 0.0013},
      {"black eyes", 0.0937, 0.0104},
      {"closed eyes", 0.1829, 0.0345}}}},
    {'f', "with glasses", 0.2580, 0.0900, 0.4072, 0.3190,
     {{{"oval face", 0.1498, 0.0486},
      {"small nose", 0.1566, 0.0524},
      {"narrow eyes", 0.1133, 0.0285},
      {"with lipstick", 0.1100, 0.0290},
      {"long eyebrows", 0.1245, 0.0210},
      {"short hair", 0.1004, 0.0303},
      {"with bangs", 0.0594, -0.0121},
      {"receding hairline", 0.0268, 0.0006},
      {"sideburns", 0.0876, 0.0256},
      {"high cheekbones", 0.1225, 0.0404}}}},
    {'g', "pale", 0.4401, 0.1521, 0.5371, 0.263,
     {{{"green eyes", 0.1867, 0.0270},
      {"narrow eyes", 0.3378, 0.0672},
      {"dark eyebrows", 0.1920, 0.0251},
      {"with lipstick", 0.1914, 0.0574},
      {"long nose", 0.2805, 0.0494},
      {"high cheekbones", 0.1708, 0.0322},
      {"oval face", 0.3418, -0.0489},
      {"with makeup", 0.2076, 0.0275},
      {"blond hair", 0.1586, 0.0181},
      {"rosy cheeks", 0.2968, 0.0472}}}},
    {'h', "double chin", 0.3800, 0.1418, 0.5579, 0.2452,
     {{{"open mouth", 0.262, 0.0376},
      {"oval face", 0.2924, 0.0442},
      {"round eyebrows", 0.1990, 0.0563},
      {"big nose", 0.2588, 0.0243},
      {"big mouth", 0.2839, 0.0485},
      {"with lipstick", 0.1156, 0.0144},
      {"sideburns", 0.1311, -0.0122},
      {"rosy cheecks", 0.1566, 0.0444},
      {"closed eyes", 0.2248, 0.0466},
      {"bald", 0.1972, 0.0218}}}},
    {'i', "with lipstick", 0.3069, 0.1491, 0.4904, 0.3149,
     {{{"arched eyebrows", 0.1077, 0.0270},
      {"close mouth", 0.2105, 0.0814},
      {"with makeup", 0.2154, 0.1035},
      {"green eyes", 0.0467, 0.0134},
      {"high cheekbones", 0.1517, 0.0526},
      {"oval face", 0.1933, 0.0482},
      {"pinched nose", 0.1070, -0.0027},
      {"white skin", 0.1668, 0.0371},
      {"big eyes", 0.1157, 0.0424},
      {"rosy cheeks", 0.1900, 0.0611}}}},
    {'j', "arched eyebrows", 0.4002, 0.1881, 0.3585, 0.1425,
     {{{"with lipstick", 0.1783, 0.0364},
      {"round eyes", 0.1541, 0.0275},
      {"with makeup", 0.1909, 0.0420},
      {"thick nose", 0.1836, 0.0418},
      {"round face", 0.1222, 0.0157},
      {"rosy cheeks", 0.1404, 0.0121},
      {"with earrings", 0.1044, -0.0278},
      {"double chin", 0.1633, 0.0410},
      {"blond hair", 0.1112, 0.0243},
      {"with bangs", 0.0865, 0.0175}}}},
    {'k', "blue eyes", 0.4220, 0.2163, 0.4880, 0.2480,
     {{{"wide eyes", 0.3635, 0.1212},
      {"with makeup", 0.2127, 0.0677},
      {"bags under eyes", 0.2702, 0.1005},
      {"with lipstick", 0.1587, 0.0350},
      {"rosy cheeks", 0.2317, 0.0375},
      {"blond hair", 0.1263, 0.0321},
      {"round face", 0.1993, -0.0518},
      {"pinched nose", 0.1786, 0.0374},
      {"white skin", 0.2236, 0.0432},
      {"long hair", 0.0949, 0.0109}}}},
    {'l', "with earrings", 0.3703, 0.2917, 0.4575, 0.0712,
     {{{"arched eyebrows", 0.1425, 0.0193},
      {"short hair", 0.1369, 0.0183},
      {"with makeup", 0.2054, 0.0370},
      {"high cheekbones", 0.1553, 0.0188},
      {"with lipstick", 0.1531, 0.0210},
      {"green eyes", 0.1338, 0.0115},
      {"round face", 0.1965, -0.0233},
      {"with bangs", 0.0992, 0.0142},
      {"round eyes", 0.1899, 0.0203},
      {"with makeup", 0.2035, 0.0240}}}},
}};

}  // namespace published
