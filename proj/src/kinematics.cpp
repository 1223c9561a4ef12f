#include "sdi/kinematics.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "sdi/binary_io.hpp"
#include "sdi/error.hpp"
#include "sdi/random.hpp"

namespace sdi::kinematics {

namespace {

constexpr double kTolerance = 1e-9;

bool is_rigid(const Eigen::Isometry3d& t) {
  const Eigen::Matrix3d r = t.linear();
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6 &&
         std::abs(r.determinant() - 1.0) < 1e-6 && t.translation().allFinite();
}

}  // namespace

Eigen::Isometry3d JointSpec::motion(double q) const {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  if (kind == JointKind::kRevolute) {
    t.linear() = Eigen::AngleAxisd(q, axis).toRotationMatrix();
  } else {
    t.translation() = q * axis;
  }
  return t;
}

Eigen::VectorXd KinematicChain::lower() const {
  Eigen::VectorXd out(dof());
  for (int i = 0; i < dof(); ++i) out(i) = joints[i].lower;
  return out;
}

Eigen::VectorXd KinematicChain::upper() const {
  Eigen::VectorXd out(dof());
  for (int i = 0; i < dof(); ++i) out(i) = joints[i].upper;
  return out;
}

void KinematicChain::validate() const {
  if (joints.empty()) throw Error(ErrorCode::kConfiguration, "chain has no joints");
  for (const auto& j : joints) {
    if (std::abs(j.axis.norm() - 1.0) > kTolerance) {
      throw Error(ErrorCode::kConfiguration, "joint '" + j.name + "' axis is not unit length");
    }
    if (!(j.lower <= j.upper)) {
      throw Error(ErrorCode::kConfiguration, "joint '" + j.name + "' has inverted limits");
    }
    if (!is_rigid(j.origin)) {
      throw Error(ErrorCode::kConfiguration, "joint '" + j.name + "' origin is not rigid");
    }
  }
  if (!is_rigid(mount) || !ee_offset.allFinite()) {
    throw Error(ErrorCode::kConfiguration, "mount or end-effector offset is not rigid");
  }
}

Eigen::Isometry3d BaseConfig::transform() const {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = Eigen::Vector3d(x, y, z);
  t.linear() = Eigen::AngleAxisd(omega, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return t;
}

void check_joints(const KinematicChain& chain, const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (q.size() != chain.dof()) {
    throw Error(ErrorCode::kShape, "expected " + std::to_string(chain.dof()) +
                                       " joint values, got " + std::to_string(q.size()));
  }
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[i];
    if (!(q(i) >= j.lower - kTolerance && q(i) <= j.upper + kTolerance)) {
      throw Error(ErrorCode::kLimit, "joint '" + j.name + "' value " + std::to_string(q(i)) +
                                         " outside [" + std::to_string(j.lower) + ", " +
                                         std::to_string(j.upper) + "]");
    }
  }
}

Eigen::Isometry3d local_pose(const KinematicChain& chain,
                             const Eigen::Ref<const Eigen::VectorXd>& q) {
  check_joints(chain, q);
  Eigen::Isometry3d t = chain.mount;
  for (int i = 0; i < chain.dof(); ++i) t = t * chain.joints[i].origin * chain.joints[i].motion(q(i));
  t.translation() += t.linear() * chain.ee_offset;
  return t;
}

Eigen::Isometry3d forward_pose(const KinematicChain& chain,
                               const Eigen::Ref<const Eigen::VectorXd>& q, const BaseConfig& base) {
  return base.transform() * local_pose(chain, q);
}

Eigen::Vector3d forward(const KinematicChain& chain, const Eigen::Ref<const Eigen::VectorXd>& q,
                        const BaseConfig& base) {
  return forward_pose(chain, q, base).translation();
}

Eigen::Matrix<double, 3, 4> base_jacobian(const KinematicChain& chain,
                                          const Eigen::Ref<const Eigen::VectorXd>& q,
                                          const BaseConfig& base) {
  const Eigen::Vector3d p = local_pose(chain, q).translation();
  const double c = std::cos(base.omega);
  const double s = std::sin(base.omega);
  Eigen::Matrix<double, 3, 4> j = Eigen::Matrix<double, 3, 4>::Zero();
  j.leftCols<3>().setIdentity();
  j(0, 3) = -s * p.x() - c * p.y();
  j(1, 3) = c * p.x() - s * p.y();
  return j;
}

Eigen::MatrixXd joint_jacobian(const KinematicChain& chain,
                               const Eigen::Ref<const Eigen::VectorXd>& q, const BaseConfig& base) {
  check_joints(chain, q);
  const int n = chain.dof();
  std::vector<Eigen::Isometry3d> frames(static_cast<std::size_t>(n));
  Eigen::Isometry3d t = base.transform() * chain.mount;
  for (int i = 0; i < n; ++i) {
    t = t * chain.joints[i].origin;
    frames[static_cast<std::size_t>(i)] = t;
    t = t * chain.joints[i].motion(q(i));
  }
  const Eigen::Vector3d tip = t * chain.ee_offset;
  Eigen::MatrixXd jac(3, n);
  for (int i = 0; i < n; ++i) {
    const auto& f = frames[static_cast<std::size_t>(i)];
    const Eigen::Vector3d axis = f.linear() * chain.joints[i].axis;
    jac.col(i) = chain.joints[i].kind == JointKind::kRevolute
                     ? Eigen::Vector3d(axis.cross(tip - f.translation()))
                     : axis;
  }
  return jac;
}

Eigen::MatrixXd sample_joints(const KinematicChain& chain, Eigen::Index count, std::uint64_t seed) {
  if (count <= 0) throw Error(ErrorCode::kConfiguration, "sample count must be > 0");
  Rng rng(derive_seed(seed, 0x701));
  Eigen::MatrixXd out(chain.dof(), count);
  for (Eigen::Index s = 0; s < count; ++s) {
    for (int i = 0; i < chain.dof(); ++i) {
      const auto& j = chain.joints[i];
      out(i, s) = j.lower == j.upper ? j.lower : uniform(rng, j.lower, j.upper);
    }
  }
  return out;
}

Eigen::Matrix3Xd local_positions(const KinematicChain& chain, const Eigen::MatrixXd& joints) {
  if (joints.rows() != chain.dof()) throw Error(ErrorCode::kShape, "joint matrix has wrong rows");
  Eigen::Matrix3Xd out(3, joints.cols());
  for (Eigen::Index s = 0; s < joints.cols(); ++s) {
    Eigen::Isometry3d t = chain.mount;
    for (int i = 0; i < chain.dof(); ++i) {
      t = t * chain.joints[i].origin * chain.joints[i].motion(joints(i, s));
    }
    out.col(s) = t * chain.ee_offset;
  }
  return out;
}

Eigen::Matrix3Xd to_world(const Eigen::Matrix3Xd& local, const BaseConfig& base) {
  const Eigen::Matrix3d r = Eigen::AngleAxisd(base.omega, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  Eigen::Matrix3Xd out = r * local;
  out.colwise() += Eigen::Vector3d(base.x, base.y, base.z);
  return out;
}

double sampled_reach(const KinematicChain& chain, Eigen::Index samples, std::uint64_t seed) {
  return local_positions(chain, sample_joints(chain, samples, seed)).colwise().norm().maxCoeff();
}

Eigen::Matrix3d rpy_rotation(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// --- Parser ----------------------------------------------------------------

namespace {

struct ParsedJoint {
  JointSpec spec;
  std::string parent;
  std::string child;
  int line = 0;
};

class LineReader {
 public:
  LineReader(std::string_view source, int line, const std::string& text)
      : source_(source), line_(line), in_(text) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(ErrorCode::kParse, std::string(source_) + ":" + std::to_string(line_) + ": " + message);
  }

  bool next(std::string& word) { return static_cast<bool>(in_ >> word); }

  std::string word(const char* what) {
    std::string w;
    if (!next(w)) fail(std::string("expected ") + what);
    return w;
  }

  double number(const char* what) {
    std::string w = word(what);
    try {
      std::size_t used = 0;
      double v = std::stod(w, &used);
      if (used != w.size() || !std::isfinite(v)) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      fail(std::string("expected a number for ") + what + ", got '" + w + "'");
    }
  }

  Eigen::Vector3d triple(const char* what) {
    double a = number(what);
    double b = number(what);
    double c = number(what);
    return {a, b, c};
  }

  int line() const { return line_; }

 private:
  std::string_view source_;
  int line_;
  std::istringstream in_;
};

Eigen::Isometry3d make_transform(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = rpy_rotation(rpy.x(), rpy.y(), rpy.z());
  t.translation() = xyz;
  return t;
}

}  // namespace

KinematicChain parse_chain(std::string_view text, std::string_view source) {
  KinematicChain chain;
  std::set<std::string> links;
  std::vector<ParsedJoint> joints;
  std::map<std::string, int> parent_use;  // link -> line of the joint using it as parent
  std::string ee_link;
  Eigen::Vector3d ee_xyz = Eigen::Vector3d::Zero();
  bool have_ee = false;

  std::istringstream all{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(all, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    LineReader in(source, line_no, raw);
    std::string key;
    if (!in.next(key)) continue;

    if (key == "chain") {
      chain.name = in.word("chain name");
    } else if (key == "mount") {
      Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
      Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
      std::string w;
      while (in.next(w)) {
        if (w == "xyz") {
          xyz = in.triple("mount xyz");
        } else if (w == "rpy") {
          rpy = in.triple("mount rpy");
        } else {
          in.fail("unknown mount field '" + w + "'");
        }
      }
      chain.mount = make_transform(xyz, rpy);
    } else if (key == "link") {
      std::string name = in.word("link name");
      if (!links.insert(name).second) in.fail("duplicate link '" + name + "'");
    } else if (key == "joint") {
      ParsedJoint j;
      j.line = line_no;
      j.spec.name = in.word("joint name");
      std::string kind = in.word("joint kind");
      if (kind == "revolute") {
        j.spec.kind = JointKind::kRevolute;
      } else if (kind == "prismatic") {
        j.spec.kind = JointKind::kPrismatic;
      } else {
        in.fail("unsupported joint kind '" + kind + "'");
      }
      Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
      Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
      bool have_limits = false;
      bool have_axis = false;
      std::string w;
      while (in.next(w)) {
        if (w == "parent") {
          j.parent = in.word("parent link");
        } else if (w == "child") {
          j.child = in.word("child link");
        } else if (w == "axis") {
          j.spec.axis = in.triple("axis");
          have_axis = true;
        } else if (w == "xyz") {
          xyz = in.triple("xyz");
        } else if (w == "rpy") {
          rpy = in.triple("rpy");
        } else if (w == "limits") {
          j.spec.lower = in.number("lower limit");
          j.spec.upper = in.number("upper limit");
          have_limits = true;
        } else {
          in.fail("unknown joint field '" + w + "'");
        }
      }
      if (j.parent.empty() || j.child.empty()) in.fail("joint needs parent and child links");
      if (!have_axis) in.fail("joint needs an axis");
      if (!have_limits) in.fail("joint needs limits");
      if (j.spec.axis.norm() == 0.0) in.fail("joint axis is zero");
      j.spec.axis.normalize();
      if (j.spec.lower > j.spec.upper) in.fail("lower limit exceeds upper limit");
      j.spec.origin = make_transform(xyz, rpy);
      if (parent_use.contains(j.parent)) {
        in.fail("branching unsupported: link '" + j.parent + "' already has a child joint (line " +
                std::to_string(parent_use[j.parent]) + ")");
      }
      parent_use[j.parent] = line_no;
      joints.push_back(std::move(j));
    } else if (key == "end_effector") {
      ee_link = in.word("end-effector link");
      std::string w;
      while (in.next(w)) {
        if (w == "xyz") {
          ee_xyz = in.triple("end-effector xyz");
        } else {
          in.fail("unknown end_effector field '" + w + "'");
        }
      }
      have_ee = true;
    } else {
      in.fail("unknown keyword '" + key + "'");
    }
  }

  auto fail = [&](int line, const std::string& message) {
    throw Error(ErrorCode::kParse, std::string(source) + ":" + std::to_string(line) + ": " + message);
  };
  if (joints.empty()) fail(line_no, "no joints defined");

  std::map<std::string, const ParsedJoint*> by_parent;
  std::set<std::string> children;
  for (const auto& j : joints) {
    if (!links.contains(j.parent)) fail(j.line, "undeclared link '" + j.parent + "'");
    if (!links.contains(j.child)) fail(j.line, "undeclared link '" + j.child + "'");
    if (!children.insert(j.child).second) fail(j.line, "link '" + j.child + "' has two parents");
    by_parent[j.parent] = &j;
  }
  std::vector<std::string> roots;
  for (const auto& j : joints) {
    if (!children.contains(j.parent)) roots.push_back(j.parent);
  }
  if (roots.size() != 1) fail(joints.front().line, "chain must have exactly one root link");

  std::string link = roots.front();
  std::set<std::string> visited{link};
  while (by_parent.contains(link)) {
    const ParsedJoint* j = by_parent[link];
    chain.joints.push_back(j->spec);
    link = j->child;
    if (!visited.insert(link).second) fail(j->line, "kinematic loop at link '" + link + "'");
  }
  if (chain.joints.size() != joints.size()) {
    fail(joints.back().line, "joints are not connected into one serial chain");
  }
  if (have_ee) {
    if (ee_link != link) fail(line_no, "end effector must sit on the last link '" + link + "'");
    chain.ee_offset = ee_xyz;
  }
  chain.validate();
  return chain;
}

KinematicChain load_chain(const std::filesystem::path& path) {
  return parse_chain(io::read_text_file(path), path.string());
}

std::filesystem::path bundled_arm_path() {
  return std::filesystem::path(SDI_DATA_DIR) / "arm6.chain";
}

}  // namespace sdi::kinematics
